#pragma once

// Shared helpers for the unit and acceptance suites.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "teachaudit/cohort.hpp"
#include "teachaudit/corpus.hpp"

namespace teachaudit::testing {

inline std::filesystem::path fixture(const std::string& rel) {
  return std::filesystem::path(TEACHAUDIT_TEST_FIXTURES) / rel;
}

inline std::filesystem::path data_dir() { return TEACHAUDIT_DATA_DIR; }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& body) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary | std::ios::trunc) << body;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("teachaudit-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

/// `n` subjects with `levels` short explanations each.
inline corpus::Dataset synthetic_dataset(std::size_t n, int levels, std::string name = "synthetic") {
  corpus::Dataset d;
  d.name = std::move(name);
  d.level_count = levels;
  for (std::size_t i = 0; i < n; ++i) {
    corpus::LeveledSubject s;
    s.subject_id = "s" + std::to_string(i);
    s.title = "Topic " + std::to_string(i);
    for (int l = 1; l <= levels; ++l) {
      s.explanations.push_back({l, "Explanation " + std::to_string(i) + " at level " + std::to_string(l) + "."});
    }
    d.subjects.push_back(std::move(s));
  }
  return d;
}

/// One demographic subgroup plus a reference subgroup, ids taken verbatim
/// as phrases.
inline cohort::Cohort small_cohort(const std::vector<std::string>& members,
                                   const std::vector<std::string>& reference = {"beginner", "expert"}) {
  using nlohmann::json;
  auto chars = [](const std::vector<std::string>& ids) {
    json arr = json::array();
    for (const auto& id : ids) arr.push_back({{"id", id}, {"phrase", id}, {"article", "a"}});
    return arr;
  };
  json doc = {{"version", "test-1"},
              {"subgroups",
               {{{"id", "group"}, {"name", "Group"}, {"is_reference", false}, {"characteristics", chars(members)}}}}};
  if (!reference.empty()) {
    doc["subgroups"].push_back(
        {{"id", "reference"}, {"name", "Reference"}, {"is_reference", true}, {"characteristics", chars(reference)}});
  }
  return cohort::Cohort::from_json(doc);
}

}  // namespace teachaudit::testing
