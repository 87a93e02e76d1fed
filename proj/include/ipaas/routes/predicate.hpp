#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace ipaas::routes {

using Document = nlohmann::json;

class PredicateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dotted path lookup ("a.b.c") into nested objects. Null when absent.
const Document* find_path(const Document& doc, std::string_view path);
void set_path(Document& doc, std::string_view path, Document value);
bool erase_path(Document& doc, std::string_view path);

enum class Comparator { eq, ne, lt, le, gt, ge };

std::string_view to_string(Comparator op);

/// `path <op> value`. A string value starting with '$' names another path in
/// the same document ("predicted_gas <= $gas_budget").
struct Predicate {
  std::string path;
  Comparator op = Comparator::eq;
  Document value;

  /// Throws PredicateError when a path is missing or an ordering comparison
  /// mixes non-numeric or non-string operands.
  bool evaluate(const Document& doc) const;
  std::string to_string() const;

  static Predicate parse(std::string_view text);
  static Predicate from_json(const Document& j);
};

/// AND-list of predicates; the empty condition is true.
using Condition = std::vector<Predicate>;

bool evaluate(const Condition& condition, const Document& doc);
Condition condition_from_json(const Document& j);
Document condition_to_json(const Condition& condition);

}  // namespace ipaas::routes
