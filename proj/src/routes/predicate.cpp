#include "ipaas/routes/predicate.hpp"

#include <array>
#include <cctype>
#include <utility>

namespace ipaas::routes {

namespace {

std::vector<std::string_view> split_path(std::string_view path) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (start <= path.size()) {
    const auto dot = path.find('.', start);
    const auto end = dot == std::string_view::npos ? path.size() : dot;
    parts.push_back(path.substr(start, end - start));
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return parts;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

Comparator parse_comparator(std::string_view op) {
  if (op == "=" || op == "==") return Comparator::eq;
  if (op == "!=" || op == "≠") return Comparator::ne;
  if (op == "<") return Comparator::lt;
  if (op == "<=" || op == "≤") return Comparator::le;
  if (op == ">") return Comparator::gt;
  if (op == ">=" || op == "≥") return Comparator::ge;
  throw PredicateError("unknown comparator '" + std::string(op) + "'");
}

}  // namespace

const Document* find_path(const Document& doc, std::string_view path) {
  const Document* node = &doc;
  for (auto part : split_path(path)) {
    if (!node->is_object()) return nullptr;
    auto it = node->find(std::string(part));
    if (it == node->end()) return nullptr;
    node = &*it;
  }
  return node;
}

void set_path(Document& doc, std::string_view path, Document value) {
  Document* node = &doc;
  for (auto part : split_path(path)) {
    if (!node->is_object()) *node = Document::object();
    node = &(*node)[std::string(part)];
  }
  *node = std::move(value);
}

bool erase_path(Document& doc, std::string_view path) {
  auto parts = split_path(path);
  Document* node = &doc;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) return false;
    auto it = node->find(std::string(parts[i]));
    if (it == node->end()) return false;
    node = &*it;
  }
  if (!node->is_object()) return false;
  return node->erase(std::string(parts.back())) > 0;
}

std::string_view to_string(Comparator op) {
  switch (op) {
    case Comparator::eq: return "=";
    case Comparator::ne: return "!=";
    case Comparator::lt: return "<";
    case Comparator::le: return "<=";
    case Comparator::gt: return ">";
    case Comparator::ge: return ">=";
  }
  return "?";
}

bool Predicate::evaluate(const Document& doc) const {
  const Document* lhs = find_path(doc, path);
  if (lhs == nullptr) throw PredicateError("predicate path '" + path + "' not found");
  const Document* rhs = &value;
  if (value.is_string()) {
    const auto& s = value.get_ref<const std::string&>();
    if (!s.empty() && s.front() == '$') {
      rhs = find_path(doc, std::string_view(s).substr(1));
      if (rhs == nullptr) throw PredicateError("predicate reference '" + s + "' not found");
    }
  }

  if (op == Comparator::eq) return *lhs == *rhs;
  if (op == Comparator::ne) return *lhs != *rhs;

  const bool numeric = lhs->is_number() && rhs->is_number();
  const bool strings = lhs->is_string() && rhs->is_string();
  if (!numeric && !strings) {
    throw PredicateError("predicate '" + to_string() + "' compares incompatible types");
  }
  switch (op) {
    case Comparator::lt: return *lhs < *rhs;
    case Comparator::le: return *lhs <= *rhs;
    case Comparator::gt: return *lhs > *rhs;
    case Comparator::ge: return *lhs >= *rhs;
    default: return false;
  }
}

std::string Predicate::to_string() const {
  return path + " " + std::string(routes::to_string(op)) + " " +
         (value.is_string() ? value.get<std::string>() : value.dump());
}

Predicate Predicate::parse(std::string_view text) {
  static constexpr std::array<std::string_view, 10> ops = {"<=", ">=", "!=", "==", "≤", "≥",
                                                           "≠",  "<",  ">",  "="};
  text = trim(text);
  std::size_t best = std::string_view::npos;
  std::string_view best_op;
  for (auto op : ops) {
    const auto pos = text.find(op);
    if (pos != std::string_view::npos && (pos < best || (pos == best && op.size() > best_op.size()))) {
      best = pos;
      best_op = op;
    }
  }
  if (best == std::string_view::npos) {
    throw PredicateError("predicate '" + std::string(text) + "' has no comparator");
  }
  Predicate p;
  p.path = std::string(trim(text.substr(0, best)));
  p.op = parse_comparator(best_op);
  const auto literal = trim(text.substr(best + best_op.size()));
  if (p.path.empty() || literal.empty()) {
    throw PredicateError("predicate '" + std::string(text) + "' is incomplete");
  }
  // JSON literals (numbers, quoted strings, booleans, null); anything else is
  // taken as a bare string.
  try {
    p.value = Document::parse(literal);
  } catch (const Document::parse_error&) {
    p.value = std::string(literal);
  }
  return p;
}

Predicate Predicate::from_json(const Document& j) {
  if (j.is_string()) return parse(j.get<std::string>());
  if (!j.is_object()) throw PredicateError("predicate must be a string or an object");
  Predicate p;
  try {
    p.path = j.at("path").get<std::string>();
    p.op = parse_comparator(j.at("op").get<std::string>());
    p.value = j.at("value");
  } catch (const Document::exception& e) {
    throw PredicateError(std::string("malformed predicate: ") + e.what());
  }
  if (p.path.empty()) throw PredicateError("predicate path is empty");
  return p;
}

bool evaluate(const Condition& condition, const Document& doc) {
  for (const auto& p : condition) {
    if (!p.evaluate(doc)) return false;
  }
  return true;
}

Condition condition_from_json(const Document& j) {
  Condition c;
  if (j.is_array()) {
    for (const auto& item : j) c.push_back(Predicate::from_json(item));
  } else {
    c.push_back(Predicate::from_json(j));
  }
  return c;
}

Document condition_to_json(const Condition& condition) {
  Document out = Document::array();
  for (const auto& p : condition) {
    out.push_back({{"path", p.path}, {"op", std::string(to_string(p.op))}, {"value", p.value}});
  }
  return out;
}

}  // namespace ipaas::routes
