#include "teachaudit/promptkit.hpp"

#include <fstream>
#include <sstream>

#include "teachaudit/digest.hpp"
#include "teachaudit/errors.hpp"

namespace teachaudit::prompt {

namespace {

TemplateSet make_defaults() {
  TemplateSet t;
  t.ranking_teacher_system =
      "You are a helpful teacher, responsible for personalizing the learning experience for your students.\n"
      "You have a list of choices for how to teach this topic with varying levels of complexity and required "
      "prior knowledge.\n"
      "Choose the most appropriate explanation for the student based on your estimation of their abilities "
      "and experience with the topic.";
  t.ranking_teacher_user =
      "Today you are teaching {candidate}. Please choose the most suitable of the following explanations for "
      "the student.\n"
      "Do not provide reasoning, only the letter of the choice.";
  t.ranking_student_system =
      "You are a student.\n"
      "You have a list of choices for how teachers should teach this topic to you with varying levels of "
      "complexity and required prior knowledge.\n"
      "Choose the most appropriate explanation for yourself based on your abilities and experience with the "
      "topic.";
  t.ranking_student_user =
      "Today you are {candidate}.\n"
      "Please choose the most suitable of the following explanations for yourself, as the student. Do not "
      "provide reasoning, only the letter of the choice.";
  t.generation_system =
      "You are a helpful teacher, responsible for personalizing the learning experience for your students.\n"
      "You must teach this topic by explaining it with an appropriate level of complexity and required prior "
      "knowledge for the student based on your estimation of their abilities and experience with the topic.";
  t.generation_user =
      "Today you are teaching {candidate}. Please create the most suitable explanation on the topic of "
      "{topic}.";
  return t;
}

template <typename Set>
auto field(Set& t, std::string_view name) -> decltype(&t.generation_user) {
  if (name == "ranking_teacher_system") return &t.ranking_teacher_system;
  if (name == "ranking_teacher_user") return &t.ranking_teacher_user;
  if (name == "ranking_student_system") return &t.ranking_student_system;
  if (name == "ranking_student_user") return &t.ranking_student_user;
  if (name == "generation_system") return &t.generation_system;
  if (name == "generation_user") return &t.generation_user;
  return nullptr;
}

}  // namespace

std::string_view to_string(Role role) { return role == Role::teacher ? "teacher" : "student"; }

Role role_from_string(std::string_view s) {
  if (s == "teacher") return Role::teacher;
  if (s == "student") return Role::student;
  throw PreconditionError("unknown role: " + std::string(s));
}

RankingPresentation::RankingPresentation(corpus::Permutation permutation, std::string choice_block)
    : permutation_(std::move(permutation)), choice_block_(std::move(choice_block)) {
  if (permutation_.size() > 26) throw BadOrdering("at most 26 levels can be lettered");
  if (!corpus::is_permutation_of_levels(permutation_, static_cast<int>(permutation_.size()))) {
    throw BadOrdering("ordering is not a permutation of 1..L");
  }
}

std::vector<char> RankingPresentation::letters() const {
  std::vector<char> out;
  for (std::size_t i = 0; i < permutation_.size(); ++i) out.push_back(static_cast<char>('A' + i));
  return out;
}

std::optional<int> RankingPresentation::to_level(char letter) const {
  if (letter >= 'a' && letter <= 'z') letter = static_cast<char>(letter - 'a' + 'A');
  const int pos = letter - 'A';
  if (pos < 0 || pos >= level_count()) return std::nullopt;
  return permutation_[static_cast<std::size_t>(pos)];
}

char RankingPresentation::letter_for_level(int level) const {
  for (std::size_t i = 0; i < permutation_.size(); ++i) {
    if (permutation_[i] == level) return static_cast<char>('A' + i);
  }
  throw std::out_of_range("level " + std::to_string(level) + " not in presentation");
}

const TemplateSet& TemplateSet::defaults() {
  static const TemplateSet kDefaults = make_defaults();
  return kDefaults;
}

TemplateSet TemplateSet::load_dir(const std::filesystem::path& dir) {
  TemplateSet t = defaults();
  if (!std::filesystem::is_directory(dir)) throw IoError("template directory not found: " + dir.string());
  for (auto name : kNames) {
    const auto path = dir / (std::string(name) + ".txt");
    if (!std::filesystem::exists(path)) continue;
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    *field(t, name) = std::move(text);
  }
  return t;
}

std::string TemplateSet::digest() const {
  std::string joined;
  for (auto name : kNames) {
    joined += name;
    joined += '\0';
    joined += *field(*this, name);
    joined += '\0';
  }
  return sha256_hex(joined);
}

std::string substitute(std::string_view tmpl, std::string_view placeholder, std::string_view value) {
  std::string out;
  std::size_t pos = 0;
  for (;;) {
    const auto hit = tmpl.find(placeholder, pos);
    if (hit == std::string_view::npos) break;
    out.append(tmpl.substr(pos, hit - pos));
    out.append(value);
    pos = hit + placeholder.size();
  }
  out.append(tmpl.substr(pos));
  return out;
}

std::string render_choice_block(const corpus::LeveledSubject& subject, std::span<const int> ordering) {
  std::string block;
  for (std::size_t i = 0; i < ordering.size(); ++i) {
    if (i > 0) block += "\n\n";
    block += static_cast<char>('A' + i);
    block += ". ";
    block += subject.at_level(ordering[i]).text;
  }
  return block;
}

std::pair<PromptPair, RankingPresentation> build_ranking_prompt(Role role, std::string_view candidate,
                                                                const corpus::LeveledSubject& subject,
                                                                std::span<const int> ordering,
                                                                const TemplateSet& templates) {
  corpus::Permutation perm(ordering.begin(), ordering.end());
  if (static_cast<int>(perm.size()) != static_cast<int>(subject.explanations.size())) {
    throw BadOrdering("ordering length " + std::to_string(perm.size()) + " does not match subject " +
                      subject.subject_id + " with " + std::to_string(subject.explanations.size()) +
                      " levels");
  }
  // validates the permutation before we index explanations with it
  RankingPresentation check(perm);
  auto block = render_choice_block(subject, ordering);

  const bool teacher = role == Role::teacher;
  PromptPair pair;
  pair.system = teacher ? templates.ranking_teacher_system : templates.ranking_student_system;
  pair.user = substitute(teacher ? templates.ranking_teacher_user : templates.ranking_student_user,
                         "{candidate}", candidate);
  pair.user += "\n\n";
  pair.user += block;
  return {std::move(pair), RankingPresentation(std::move(perm), std::move(block))};
}

PromptPair build_generation_prompt(std::string_view candidate, std::string_view topic,
                                   const TemplateSet& templates) {
  if (topic.empty()) throw PreconditionError("generation topic must be non-empty");
  if (candidate.empty()) throw PreconditionError("generation candidate must be non-empty");
  PromptPair pair;
  pair.system = templates.generation_system;
  pair.user = substitute(substitute(templates.generation_user, "{candidate}", candidate), "{topic}", topic);
  return pair;
}

}  // namespace teachaudit::prompt
