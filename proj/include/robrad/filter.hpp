#pragma once

// Row filter predicates:
//
//   expr    := and_expr ( ("OR" | "||") and_expr )*
//   and_expr:= atom ( ("AND" | "&&") atom )*
//   atom    := "(" expr ")" | column op literal
//   op      := == | != | < | <= | > | >=
//   literal := number | bare word | 'quoted' | "quoted"
//
// Keywords are case-insensitive. A comparison against a missing cell is
// false, whatever the operator.

#include <cctype>
#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "robrad/dataset.hpp"
#include "robrad/error.hpp"

namespace robrad {

enum class CompareOp { Eq, Ne, Lt, Le, Gt, Ge };

class RowFilter {
 public:
  RowFilter() = default;

  /// Parses `source`; an empty or all-blank source accepts every row.
  static RowFilter parse(std::string_view source) {
    RowFilter f;
    f.source_ = std::string(source);
    Parser p{tokenize(source), 0};
    if (p.tokens.empty()) return f;
    f.root_ = p.parse_or();
    if (p.pos != p.tokens.size()) throw ConfigError("filter: unexpected token '" + p.tokens[p.pos].text + "'");
    return f;
  }

  bool empty() const { return root_ == nullptr; }
  const std::string& source() const { return source_; }

  /// Column names referenced by the predicate.
  std::vector<std::string> columns() const {
    std::vector<std::string> out;
    if (root_) collect(*root_, out);
    return out;
  }

  /// Evaluates the predicate at `row`; throws on unknown columns or on
  /// ordering comparisons against categorical columns.
  bool evaluate(const Dataset& data, std::size_t row) const { return !root_ || eval(*root_, data, row); }

 private:
  struct Token {
    enum Kind { Word, Number, String, Op, LParen, RParen, And, Or } kind;
    std::string text;
  };

  struct Node {
    enum Kind { Compare, And, Or } kind = Compare;
    std::string column;
    CompareOp op = CompareOp::Eq;
    std::string literal;
    bool literal_is_number = false;
    double number = 0.0;
    std::unique_ptr<Node> lhs, rhs;
  };

  static std::vector<Token> tokenize(std::string_view s) {
    std::vector<Token> out;
    std::size_t i = 0;
    auto upper = [](std::string w) {
      for (auto& c : w) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      return w;
    };
    while (i < s.size()) {
      char c = s[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
      } else if (c == '(') {
        out.push_back({Token::LParen, "("});
        ++i;
      } else if (c == ')') {
        out.push_back({Token::RParen, ")"});
        ++i;
      } else if (c == '\'' || c == '"') {
        auto close = s.find(c, i + 1);
        if (close == std::string_view::npos) throw ConfigError("filter: unterminated string literal");
        out.push_back({Token::String, std::string(s.substr(i + 1, close - i - 1))});
        i = close + 1;
      } else if (s.substr(i, 2) == "&&") {
        out.push_back({Token::And, "&&"});
        i += 2;
      } else if (s.substr(i, 2) == "||") {
        out.push_back({Token::Or, "||"});
        i += 2;
      } else if (c == '=' || c == '!' || c == '<' || c == '>') {
        std::string op(1, c);
        if (i + 1 < s.size() && s[i + 1] == '=') op.push_back('=');
        if (op == "=" || op == "!") throw ConfigError("filter: invalid operator '" + op + "'");
        out.push_back({Token::Op, op});
        i += op.size();
      } else {
        std::size_t j = i;
        while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j])) &&
               std::string_view("()=!<>'\"&|").find(s[j]) == std::string_view::npos)
          ++j;
        std::string word(s.substr(i, j - i));
        if (word.empty()) throw ConfigError(std::string("filter: unexpected character '") + c + "'");
        std::string up = upper(word);
        if (up == "AND") out.push_back({Token::And, word});
        else if (up == "OR") out.push_back({Token::Or, word});
        else if (parse_number(word)) out.push_back({Token::Number, word});
        else out.push_back({Token::Word, word});
        i = j;
      }
    }
    return out;
  }

  struct Parser {
    std::vector<Token> tokens;
    std::size_t pos;

    const Token* peek() const { return pos < tokens.size() ? &tokens[pos] : nullptr; }

    std::unique_ptr<Node> parse_or() {
      auto lhs = parse_and();
      while (peek() && peek()->kind == Token::Or) {
        ++pos;
        auto node = std::make_unique<Node>();
        node->kind = Node::Or;
        node->lhs = std::move(lhs);
        node->rhs = parse_and();
        lhs = std::move(node);
      }
      return lhs;
    }

    std::unique_ptr<Node> parse_and() {
      auto lhs = parse_atom();
      while (peek() && peek()->kind == Token::And) {
        ++pos;
        auto node = std::make_unique<Node>();
        node->kind = Node::And;
        node->lhs = std::move(lhs);
        node->rhs = parse_atom();
        lhs = std::move(node);
      }
      return lhs;
    }

    std::unique_ptr<Node> parse_atom() {
      const Token* t = peek();
      if (!t) throw ConfigError("filter: unexpected end of expression");
      if (t->kind == Token::LParen) {
        ++pos;
        auto inner = parse_or();
        if (!peek() || peek()->kind != Token::RParen) throw ConfigError("filter: missing ')'");
        ++pos;
        return inner;
      }
      if (t->kind != Token::Word && t->kind != Token::String)
        throw ConfigError("filter: expected column name, got '" + t->text + "'");
      auto node = std::make_unique<Node>();
      node->column = t->text;
      ++pos;
      const Token* op = peek();
      if (!op || op->kind != Token::Op) throw ConfigError("filter: expected comparison after '" + node->column + "'");
      node->op = op->text == "==" ? CompareOp::Eq
               : op->text == "!=" ? CompareOp::Ne
               : op->text == "<"  ? CompareOp::Lt
               : op->text == "<=" ? CompareOp::Le
               : op->text == ">"  ? CompareOp::Gt
                                  : CompareOp::Ge;
      ++pos;
      const Token* lit = peek();
      if (!lit || (lit->kind != Token::Word && lit->kind != Token::Number && lit->kind != Token::String))
        throw ConfigError("filter: expected literal after operator");
      node->literal = lit->text;
      if (lit->kind == Token::Number) {
        node->literal_is_number = true;
        node->number = *parse_number(lit->text);
      }
      ++pos;
      return node;
    }
  };

  static void collect(const Node& n, std::vector<std::string>& out) {
    if (n.kind == Node::Compare) {
      out.push_back(n.column);
      return;
    }
    collect(*n.lhs, out);
    collect(*n.rhs, out);
  }

  template <class T>
  static bool compare(const T& a, CompareOp op, const T& b) {
    switch (op) {
      case CompareOp::Eq: return a == b;
      case CompareOp::Ne: return a != b;
      case CompareOp::Lt: return a < b;
      case CompareOp::Le: return a <= b;
      case CompareOp::Gt: return a > b;
      case CompareOp::Ge: return a >= b;
    }
    return false;
  }

  static bool eval(const Node& n, const Dataset& data, std::size_t row) {
    if (n.kind == Node::And) return eval(*n.lhs, data, row) && eval(*n.rhs, data, row);
    if (n.kind == Node::Or) return eval(*n.lhs, data, row) || eval(*n.rhs, data, row);
    const Column& col = data.column(n.column);
    if (col.is_missing(row)) return false;
    if (col.kind == ColumnKind::Numeric) {
      if (!n.literal_is_number)
        throw ConfigError("filter: numeric column '" + n.column + "' compared with non-numeric literal '" + n.literal + "'");
      return compare(col.numeric[row], n.op, n.number);
    }
    if (n.op != CompareOp::Eq && n.op != CompareOp::Ne)
      throw ConfigError("filter: only == and != apply to categorical column '" + n.column + "'");
    return compare(col.levels[static_cast<std::size_t>(col.codes[row])], n.op, n.literal);
  }

  std::string source_;
  std::shared_ptr<const Node> root_;
};

}  // namespace robrad
