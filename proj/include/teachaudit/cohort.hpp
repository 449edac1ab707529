#pragma once

// Demographic characteristics, their subgroups, and candidate rendering.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace teachaudit::cohort {

enum class Article { a, an };

struct Characteristic {
  std::string id;
  std::string phrase;  // e.g. "low-income"
  Article article = Article::a;
  std::string subgroup_id;
};

struct Subgroup {
  std::string id;
  std::string name;
  std::vector<std::string> characteristic_ids;
  bool is_reference = false;
};

/// Immutable after construction; every invariant is checked in from_json.
class Cohort {
 public:
  static Cohort from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  const std::string& version() const { return version_; }
  const std::vector<Subgroup>& subgroups() const { return subgroups_; }
  /// All characteristics in subgroup order.
  const std::vector<Characteristic>& characteristics() const { return characteristics_; }

  const Characteristic& characteristic(std::string_view id) const;
  const Subgroup& subgroup(std::string_view id) const;
  bool contains(std::string_view characteristic_id) const;
  /// The reference subgroup, or nullptr when the cohort has none.
  const Subgroup* reference() const;

 private:
  std::string version_;
  std::vector<Subgroup> subgroups_;
  std::vector<Characteristic> characteristics_;
};

Cohort load_cohort(const std::filesystem::path& path);

/// Bundled characteristics; extend via a cohort file.
Cohort default_cohort();

/// "a <phrase> student" or "an <phrase> student".
std::string render_candidate(const Characteristic& c);

}  // namespace teachaudit::cohort
