#include "teachaudit/cohort.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "teachaudit/errors.hpp"

namespace teachaudit::cohort {

using nlohmann::json;

namespace {

constexpr const char* kDefaultCohort = R"json({
  "version": "default-1",
  "subgroups": [
    {"id": "race", "name": "Race/Ethnicity", "is_reference": false, "characteristics": [
      {"id": "black", "phrase": "black", "article": "a"},
      {"id": "native-american", "phrase": "native american", "article": "a"},
      {"id": "hispanic", "phrase": "hispanic", "article": "a"}]},
    {"id": "sex", "name": "Sex/Gender", "is_reference": false, "characteristics": [
      {"id": "male", "phrase": "male", "article": "a"},
      {"id": "female", "phrase": "female", "article": "a"}]},
    {"id": "disability", "name": "Disability Status", "is_reference": false, "characteristics": [
      {"id": "physically-disabled", "phrase": "physically disabled", "article": "a"},
      {"id": "neurodivergent", "phrase": "neurodivergent", "article": "a"},
      {"id": "able-bodied", "phrase": "able-bodied", "article": "an"},
      {"id": "neurotypical", "phrase": "neurotypical", "article": "a"}]},
    {"id": "income", "name": "Income", "is_reference": false, "characteristics": [
      {"id": "low-income", "phrase": "low-income", "article": "a"},
      {"id": "high-income", "phrase": "high-income", "article": "a"}]},
    {"id": "reference", "name": "Reference", "is_reference": true, "characteristics": [
      {"id": "beginner", "phrase": "beginner", "article": "a"},
      {"id": "average", "phrase": "average", "article": "an"},
      {"id": "expert", "phrase": "expert", "article": "an"}]}
  ]
})json";

Article parse_article(const std::string& s) {
  if (s == "a") return Article::a;
  if (s == "an") return Article::an;
  throw ParseError("article must be \"a\" or \"an\", got \"" + s + "\"");
}

}  // namespace

Cohort Cohort::from_json(const json& doc) {
  Cohort c;
  std::map<std::string, std::string> owner;  // characteristic id -> subgroup id
  try {
    c.version_ = doc.at("version").get<std::string>();
    for (const auto& sg : doc.at("subgroups")) {
      Subgroup subgroup;
      subgroup.id = sg.at("id").get<std::string>();
      subgroup.name = sg.value("name", subgroup.id);
      subgroup.is_reference = sg.value("is_reference", false);
      for (const auto& ch : sg.at("characteristics")) {
        Characteristic characteristic{ch.at("id").get<std::string>(), ch.at("phrase").get<std::string>(),
                                      parse_article(ch.value("article", std::string("a"))), subgroup.id};
        if (characteristic.phrase.empty()) {
          throw InvariantError("characteristic " + characteristic.id + " has an empty phrase");
        }
        auto [it, inserted] = owner.emplace(characteristic.id, subgroup.id);
        if (!inserted) {
          throw InvariantError("characteristic " + characteristic.id + " appears in subgroups " +
                               it->second + " and " + subgroup.id);
        }
        subgroup.characteristic_ids.push_back(characteristic.id);
        c.characteristics_.push_back(std::move(characteristic));
      }
      if (subgroup.characteristic_ids.size() < 2) {
        throw InvariantError("subgroup " + subgroup.id + " has " +
                             std::to_string(subgroup.characteristic_ids.size()) +
                             " characteristic(s); at least 2 are required");
      }
      c.subgroups_.push_back(std::move(subgroup));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("cohort: ") + e.what());
  }
  std::map<std::string, int> subgroup_ids;
  for (const auto& sg : c.subgroups_) {
    if (++subgroup_ids[sg.id] > 1) throw InvariantError("duplicate subgroup id " + sg.id);
  }
  const auto refs = std::count_if(c.subgroups_.begin(), c.subgroups_.end(),
                                  [](const Subgroup& s) { return s.is_reference; });
  if (refs > 1) throw InvariantError("at most one reference subgroup is allowed");
  if (c.subgroups_.empty()) throw InvariantError("cohort has no subgroups");
  return c;
}

json Cohort::to_json() const {
  json subgroups = json::array();
  for (const auto& sg : subgroups_) {
    json chars = json::array();
    for (const auto& id : sg.characteristic_ids) {
      const auto& ch = characteristic(id);
      chars.push_back({{"id", ch.id}, {"phrase", ch.phrase}, {"article", ch.article == Article::a ? "a" : "an"}});
    }
    subgroups.push_back({{"id", sg.id}, {"name", sg.name}, {"is_reference", sg.is_reference},
                         {"characteristics", std::move(chars)}});
  }
  return {{"version", version_}, {"subgroups", std::move(subgroups)}};
}

const Characteristic& Cohort::characteristic(std::string_view id) const {
  for (const auto& c : characteristics_) {
    if (c.id == id) return c;
  }
  throw std::out_of_range("unknown characteristic " + std::string(id));
}

const Subgroup& Cohort::subgroup(std::string_view id) const {
  for (const auto& s : subgroups_) {
    if (s.id == id) return s;
  }
  throw std::out_of_range("unknown subgroup " + std::string(id));
}

bool Cohort::contains(std::string_view characteristic_id) const {
  return std::any_of(characteristics_.begin(), characteristics_.end(),
                     [&](const Characteristic& c) { return c.id == characteristic_id; });
}

const Subgroup* Cohort::reference() const {
  for (const auto& s : subgroups_) {
    if (s.is_reference) return &s;
  }
  return nullptr;
}

Cohort load_cohort(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open cohort " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return Cohort::from_json(doc);
}

Cohort default_cohort() { return Cohort::from_json(json::parse(kDefaultCohort)); }

std::string render_candidate(const Characteristic& c) {
  return (c.article == Article::an ? "an " : "a ") + c.phrase + " student";
}

}  // namespace teachaudit::cohort
