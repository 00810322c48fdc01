#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace audit {

// Structured stand-in for image content in mock mode. Mock models answer
// questions about it and tests compute ground truth from it directly.

struct GridCell {
  int x = 0;
  int y = 0;
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

struct SceneObject {
  std::string category;
  std::string color;
  int size_rank = 1;
  GridCell position;
  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct Relation {
  std::size_t subject = 0;
  std::string predicate;
  std::size_t object = 0;
  friend bool operator==(const Relation&, const Relation&) = default;
};

struct SceneGlobal {
  std::string time_of_day;
  std::map<std::string, int> count_per_category;
  friend bool operator==(const SceneGlobal&, const SceneGlobal&) = default;
};

inline constexpr int kGridSize = 6;

struct SyntheticScene {
  std::vector<SceneObject> objects;
  std::vector<Relation> relations;
  SceneGlobal global;

  std::map<std::string, int> counts() const;
  int count(std::string_view category) const;
  bool has(std::string_view category) const { return count(category) > 0; }
  // First object of a category in list order, or nullptr.
  const SceneObject* first(std::string_view category) const;
  std::vector<std::string> categories() const;

  // Recomputes relations from positions and count_per_category from objects.
  void normalize();
  // Relation indices in range and counts consistent with objects.
  bool valid() const;

  friend bool operator==(const SyntheticScene&, const SyntheticScene&) = default;
};

void to_json(nlohmann::json& j, const SyntheticScene& s);
void from_json(const nlohmann::json& j, SyntheticScene& s);

// Vocabulary of the mock world.
const std::vector<std::string>& scene_categories();
const std::vector<std::string>& scene_colors();
bool is_color(std::string_view word);

std::string singular(std::string_view word);
std::string plural(std::string_view category, int n);

// Random scene with 1..max_categories categories. Objects of one category
// share color and size.
SyntheticScene random_scene(std::uint64_t seed, int max_categories = 4);

// ---- caption grammar ----
// Free text optionally terminated by `[SCENE { <count> <color?> <category>, ... }]`.

struct SceneSpecEntry {
  int count = 0;
  std::string color;  // empty: unspecified
  std::string category;
  friend bool operator==(const SceneSpecEntry&, const SceneSpecEntry&) = default;
};

std::optional<std::vector<SceneSpecEntry>> parse_scene_tail(std::string_view caption);
std::string format_scene_tail(const std::vector<SceneSpecEntry>& entries);
std::vector<SceneSpecEntry> describe(const SyntheticScene& scene);
// Realizes a spec into a scene. Positions, sizes and unspecified colors come
// from the seed.
SyntheticScene scene_from_spec(const std::vector<SceneSpecEntry>& entries, std::uint64_t seed);

// ---- edit grammar ----
//   recolor <category> to <color>
//   add <n> <color?> <category>
//   remove the <category>
//   move <category> to (<x>,<y>)

enum class EditVerb { Recolor, Add, Remove, Move };

struct EditCommand {
  EditVerb verb = EditVerb::Recolor;
  std::string category;
  std::string color;
  int amount = 0;
  GridCell cell;
};

std::optional<EditCommand> parse_edit(std::string_view text);
std::string format_edit(const EditCommand& cmd);
// Applies an edit. Returns nullopt when the edit targets a category that is
// not in the scene or is otherwise a no-op.
std::optional<SyntheticScene> apply_edit(const SyntheticScene& scene, const EditCommand& cmd,
                                         std::uint64_t seed);

}  // namespace audit
