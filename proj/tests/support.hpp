#pragma once

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "audit/scene.hpp"

namespace testing_support {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "audit-test-XXXXXX").string();
    path_ = ::mkdtemp(tmpl.data());
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

inline void spit(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Independent answer canonicalizer for the oracle.
inline std::string canon(const std::string& a) {
  static const std::map<std::string, std::string> numbers = {
      {"zero", "0"}, {"one", "1"}, {"two", "2"},   {"three", "3"}, {"four", "4"},  {"five", "5"},
      {"six", "6"},  {"seven", "7"}, {"eight", "8"}, {"nine", "9"}, {"ten", "10"}};
  std::string out, word;
  auto flush = [&] {
    if (word.empty() || word == "a" || word == "an" || word == "the") {
      word.clear();
      return;
    }
    auto it = numbers.find(word);
    if (!out.empty()) out += ' ';
    out += it == numbers.end() ? word : it->second;
    word.clear();
  };
  for (char c : a) {
    if (std::isalnum(static_cast<unsigned char>(c))) word += static_cast<char>(std::tolower(c));
    else flush();
  }
  flush();
  return out;
}

// Brute-force ground truth over a scene, written against the question
// surface forms alone. Returns nullopt for questions outside the probe
// family.
inline std::optional<std::string> oracle_answer(const std::string& question, const audit::SyntheticScene& scene) {
  auto first = [&](const std::string& cat) -> const audit::SceneObject* {
    for (const auto& o : scene.objects)
      if (o.category == cat) return &o;
    return nullptr;
  };
  auto count = [&](const std::string& cat) {
    return std::count_if(scene.objects.begin(), scene.objects.end(),
                         [&](const audit::SceneObject& o) { return o.category == cat; });
  };
  static const std::map<std::string, std::string> uses = {
      {"apple", "eating"}, {"banana", "eating"},        {"bird", "birdwatching"}, {"book", "reading"},
      {"car", "transportation"}, {"chair", "sitting"}, {"clock", "telling time"}, {"cup", "drinking"},
      {"dog", "companionship"},  {"kite", "flying"}};

  std::smatch m;
  static const std::regex how_many(R"(How many (\w+?)s are in the image\?)");
  static const std::regex color(R"(What color is the (\w+)\?)");
  static const std::regex left(R"(Is the (\w+) to the left of the (\w+)\?)");
  static const std::regex there(R"(Is there an? (\w+) in the image\?)");
  static const std::regex larger(R"(Which is larger, the (\w+) or the (\w+)\?)");
  static const std::regex used(R"(What is the (\w+) typically used for\?)");

  if (std::regex_match(question, m, how_many)) return std::to_string(count(m[1]));
  if (std::regex_match(question, m, color)) {
    const auto* o = first(m[1]);
    return o ? o->color : "none";
  }
  if (std::regex_match(question, m, left)) {
    const auto* a = first(m[1]);
    const auto* b = first(m[2]);
    if (!a || !b || m[1] == m[2]) return "none";
    return a->position.x < b->position.x ? "yes" : "no";
  }
  if (std::regex_match(question, m, there)) return count(m[1]) > 0 ? "yes" : "no";
  if (std::regex_match(question, m, larger)) {
    const auto* a = first(m[1]);
    const auto* b = first(m[2]);
    if (!a || !b || m[1] == m[2]) return "none";
    if (a->size_rank == b->size_rank) return "same";
    return a->size_rank > b->size_rank ? m[1].str() : m[2].str();
  }
  if (std::regex_match(question, m, used)) {
    auto it = uses.find(m[1]);
    return it == uses.end() ? "unknown" : it->second;
  }
  return std::nullopt;
}

}  // namespace testing_support
