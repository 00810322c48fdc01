#include "audit/scene.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include "audit/util.hpp"

namespace audit {

namespace {

const std::vector<std::string> kTimesOfDay = {"morning", "noon", "evening", "night"};

std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::vector<GridCell> free_cells(const SyntheticScene& scene) {
  std::set<std::pair<int, int>> used;
  for (const auto& o : scene.objects) used.insert({o.position.x, o.position.y});
  std::vector<GridCell> cells;
  for (int y = 0; y < kGridSize; ++y)
    for (int x = 0; x < kGridSize; ++x)
      if (!used.count({x, y})) cells.push_back({x, y});
  return cells;
}

GridCell place(SyntheticScene& scene, Rng& rng) {
  auto cells = free_cells(scene);
  if (cells.empty()) return {rng.between(0, kGridSize - 1), rng.between(0, kGridSize - 1)};
  return rng.pick(cells);
}

}  // namespace

const std::vector<std::string>& scene_categories() {
  static const std::vector<std::string> v = {"apple", "banana", "bird", "book", "car",
                                             "chair", "clock", "cup", "dog", "kite"};
  return v;
}

const std::vector<std::string>& scene_colors() {
  static const std::vector<std::string> v = {"red",   "green", "blue",  "yellow",
                                             "white", "black", "brown", "orange"};
  return v;
}

bool is_color(std::string_view word) {
  const auto& c = scene_colors();
  return std::find(c.begin(), c.end(), word) != c.end();
}

std::string singular(std::string_view word) {
  std::string w = to_lower(word);
  if (w.size() > 3 && w.ends_with("ies")) return w.substr(0, w.size() - 3) + "y";
  if (w.size() > 2 && w.ends_with('s') && !w.ends_with("ss")) w.pop_back();
  return w;
}

std::string plural(std::string_view category, int n) {
  std::string c(category);
  if (n == 1) return c;
  return c + "s";
}

std::map<std::string, int> SyntheticScene::counts() const {
  std::map<std::string, int> m;
  for (const auto& o : objects) ++m[o.category];
  return m;
}

int SyntheticScene::count(std::string_view category) const {
  return static_cast<int>(std::count_if(objects.begin(), objects.end(),
                                        [&](const SceneObject& o) { return o.category == category; }));
}

const SceneObject* SyntheticScene::first(std::string_view category) const {
  for (const auto& o : objects)
    if (o.category == category) return &o;
  return nullptr;
}

std::vector<std::string> SyntheticScene::categories() const {
  std::vector<std::string> out;
  for (const auto& o : objects)
    if (std::find(out.begin(), out.end(), o.category) == out.end()) out.push_back(o.category);
  return out;
}

void SyntheticScene::normalize() {
  global.count_per_category = counts();
  relations.clear();
  // Relations between the first instance of each pair of distinct categories.
  std::vector<std::size_t> heads;
  {
    std::set<std::string> seen;
    for (std::size_t i = 0; i < objects.size(); ++i)
      if (seen.insert(objects[i].category).second) heads.push_back(i);
  }
  for (std::size_t a : heads) {
    for (std::size_t b : heads) {
      if (a == b) continue;
      if (objects[a].position.x < objects[b].position.x) relations.push_back({a, "left_of", b});
      if (objects[a].position.y < objects[b].position.y) relations.push_back({a, "above", b});
    }
  }
}

bool SyntheticScene::valid() const {
  for (const auto& r : relations)
    if (r.subject >= objects.size() || r.object >= objects.size()) return false;
  return global.count_per_category == counts();
}

void to_json(nlohmann::json& j, const SyntheticScene& s) {
  auto objs = nlohmann::json::array();
  for (const auto& o : s.objects)
    objs.push_back({{"category", o.category},
                    {"color", o.color},
                    {"size_rank", o.size_rank},
                    {"position", {o.position.x, o.position.y}}});
  auto rels = nlohmann::json::array();
  for (const auto& r : s.relations) rels.push_back({r.subject, r.predicate, r.object});
  j = {{"objects", objs},
       {"relations", rels},
       {"global",
        {{"time_of_day", s.global.time_of_day},
         {"count_per_category", s.global.count_per_category}}}};
}

void from_json(const nlohmann::json& j, SyntheticScene& s) {
  s = {};
  for (const auto& o : j.at("objects")) {
    SceneObject obj;
    obj.category = o.at("category").get<std::string>();
    obj.color = o.value("color", "");
    obj.size_rank = o.value("size_rank", 1);
    if (o.contains("position")) {
      obj.position.x = o["position"].at(0).get<int>();
      obj.position.y = o["position"].at(1).get<int>();
    }
    s.objects.push_back(std::move(obj));
  }
  if (j.contains("relations"))
    for (const auto& r : j["relations"])
      s.relations.push_back({r.at(0).get<std::size_t>(), r.at(1).get<std::string>(),
                             r.at(2).get<std::size_t>()});
  if (j.contains("global")) {
    s.global.time_of_day = j["global"].value("time_of_day", "");
    if (j["global"].contains("count_per_category"))
      s.global.count_per_category =
          j["global"]["count_per_category"].get<std::map<std::string, int>>();
  }
}

SyntheticScene random_scene(std::uint64_t seed, int max_categories) {
  Rng rng(seed);
  std::vector<std::string> cats = scene_categories();
  rng.shuffle(cats);
  const int n_cat = rng.between(1, std::max(1, max_categories));
  std::vector<SceneSpecEntry> spec;
  for (int i = 0; i < n_cat; ++i)
    spec.push_back({rng.between(1, 6), rng.pick(scene_colors()), cats[static_cast<std::size_t>(i)]});
  return scene_from_spec(spec, rng.next());
}

// ---- caption grammar ----

std::optional<std::vector<SceneSpecEntry>> parse_scene_tail(std::string_view caption) {
  const std::string text = trim(caption);
  const auto open = text.rfind("[SCENE");
  if (open == std::string::npos || text.back() != ']') return std::nullopt;
  std::string_view body(text);
  body = body.substr(open + 6, body.size() - open - 7);
  const std::string inner = trim(body);
  if (inner.size() < 2 || inner.front() != '{' || inner.back() != '}') return std::nullopt;
  const std::string list = inner.substr(1, inner.size() - 2);

  std::vector<SceneSpecEntry> out;
  if (trim(list).empty()) return out;
  std::size_t start = 0;
  while (start <= list.size()) {
    std::size_t comma = list.find(',', start);
    if (comma == std::string::npos) comma = list.size();
    const auto words = split_words(std::string_view(list).substr(start, comma - start));
    if (words.size() < 2 || words.size() > 3) return std::nullopt;
    SceneSpecEntry e;
    auto n = parse_int(words[0]);
    if (!n || *n < 1) return std::nullopt;
    e.count = *n;
    if (words.size() == 3) {
      e.color = to_lower(words[1]);
      if (!is_color(e.color)) return std::nullopt;
    }
    e.category = singular(words.back());
    out.push_back(std::move(e));
    start = comma + 1;
  }
  return out;
}

std::string format_scene_tail(const std::vector<SceneSpecEntry>& entries) {
  std::vector<std::string> parts;
  for (const auto& e : entries) {
    std::string p = std::to_string(e.count) + " ";
    if (!e.color.empty()) p += e.color + " ";
    p += plural(e.category, e.count);
    parts.push_back(std::move(p));
  }
  return "[SCENE {" + join(parts, ", ") + "}]";
}

std::vector<SceneSpecEntry> describe(const SyntheticScene& scene) {
  std::vector<SceneSpecEntry> out;
  for (const auto& cat : scene.categories()) {
    const SceneObject* o = scene.first(cat);
    out.push_back({scene.count(cat), o->color, cat});
  }
  return out;
}

SyntheticScene scene_from_spec(const std::vector<SceneSpecEntry>& entries, std::uint64_t seed) {
  Rng rng(seed);
  SyntheticScene scene;
  scene.global.time_of_day = rng.pick(kTimesOfDay);
  for (const auto& e : entries) {
    const std::string color = e.color.empty() ? rng.pick(scene_colors()) : e.color;
    const int size = rng.between(1, 5);
    for (int i = 0; i < e.count; ++i) {
      SceneObject o{e.category, color, size, {}};
      o.position = place(scene, rng);
      scene.objects.push_back(std::move(o));
    }
  }
  scene.normalize();
  return scene;
}

// ---- edit grammar ----

std::optional<EditCommand> parse_edit(std::string_view raw) {
  std::string text = to_lower(trim(raw));
  while (!text.empty() && (text.back() == '.' || text.back() == '!')) text.pop_back();
  // Normalize the cell syntax "(2, 3)" into separate tokens.
  for (char& c : text)
    if (c == '(' || c == ')' || c == ',') c = ' ';
  const auto w = split_words(text);
  if (w.empty()) return std::nullopt;

  EditCommand cmd;
  if (w[0] == "recolor" && w.size() == 4 && w[2] == "to") {
    cmd.verb = EditVerb::Recolor;
    cmd.category = singular(w[1]);
    cmd.color = w[3];
    if (!is_color(cmd.color)) return std::nullopt;
    return cmd;
  }
  if (w[0] == "add" && (w.size() == 3 || w.size() == 4)) {
    cmd.verb = EditVerb::Add;
    auto n = parse_int(w[1]);
    if (!n || *n < 1) return std::nullopt;
    cmd.amount = *n;
    if (w.size() == 4) {
      if (!is_color(w[2])) return std::nullopt;
      cmd.color = w[2];
    }
    cmd.category = singular(w.back());
    return cmd;
  }
  if (w[0] == "remove" && w.size() == 3 && w[1] == "the") {
    cmd.verb = EditVerb::Remove;
    cmd.category = singular(w[2]);
    return cmd;
  }
  if (w[0] == "move") {
    std::size_t i = 1;
    if (i < w.size() && w[i] == "the") ++i;
    if (w.size() != i + 4 || w[i + 1] != "to") return std::nullopt;
    cmd.verb = EditVerb::Move;
    cmd.category = singular(w[i]);
    auto x = parse_int(w[i + 2]);
    auto y = parse_int(w[i + 3]);
    if (!x || !y) return std::nullopt;
    cmd.cell = {*x, *y};
    return cmd;
  }
  return std::nullopt;
}

std::string format_edit(const EditCommand& cmd) {
  switch (cmd.verb) {
    case EditVerb::Recolor:
      return "recolor " + cmd.category + " to " + cmd.color;
    case EditVerb::Add:
      return "add " + std::to_string(cmd.amount) + " " + (cmd.color.empty() ? "" : cmd.color + " ") +
             plural(cmd.category, cmd.amount);
    case EditVerb::Remove:
      return "remove the " + cmd.category;
    case EditVerb::Move:
      return "move " + cmd.category + " to (" + std::to_string(cmd.cell.x) + "," +
             std::to_string(cmd.cell.y) + ")";
  }
  return {};
}

std::optional<SyntheticScene> apply_edit(const SyntheticScene& scene, const EditCommand& cmd,
                                         std::uint64_t seed) {
  Rng rng(seed);
  SyntheticScene out = scene;
  switch (cmd.verb) {
    case EditVerb::Recolor: {
      if (!scene.has(cmd.category)) return std::nullopt;
      bool changed = false;
      for (auto& o : out.objects)
        if (o.category == cmd.category && o.color != cmd.color) {
          o.color = cmd.color;
          changed = true;
        }
      if (!changed) return std::nullopt;
      break;
    }
    case EditVerb::Add: {
      const SceneObject* existing = scene.first(cmd.category);
      const std::string color =
          !cmd.color.empty() ? cmd.color : existing ? existing->color : rng.pick(scene_colors());
      const int size = existing ? existing->size_rank : rng.between(1, 5);
      for (int i = 0; i < cmd.amount; ++i) {
        SceneObject o{cmd.category, color, size, {}};
        o.position = place(out, rng);
        out.objects.push_back(std::move(o));
      }
      break;
    }
    case EditVerb::Remove: {
      if (!scene.has(cmd.category)) return std::nullopt;
      std::erase_if(out.objects, [&](const SceneObject& o) { return o.category == cmd.category; });
      break;
    }
    case EditVerb::Move: {
      if (!scene.has(cmd.category)) return std::nullopt;
      if (cmd.cell.x < 0 || cmd.cell.y < 0 || cmd.cell.x >= kGridSize || cmd.cell.y >= kGridSize)
        return std::nullopt;
      for (auto& o : out.objects)
        if (o.category == cmd.category) {
          if (o.position == cmd.cell) return std::nullopt;
          o.position = cmd.cell;
          break;
        }
      break;
    }
  }
  out.normalize();
  return out;
}

}  // namespace audit
