#include "audit/mock_models.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "audit/error.hpp"
#include "audit/prompts.hpp"

namespace audit {

namespace {

std::vector<std::string> question_words(std::string_view q) {
  std::string s = to_lower(q);
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-') c = ' ';
  return split_words(s);
}

std::string with_article(const std::string& noun) {
  const bool vowel = !noun.empty() && std::string_view("aeiou").find(noun[0]) != std::string_view::npos;
  return (vowel ? "an " : "a ") + noun;
}

std::optional<std::size_t> head_index(const SyntheticScene& scene, std::string_view category) {
  for (std::size_t i = 0; i < scene.objects.size(); ++i)
    if (scene.objects[i].category == category) return i;
  return std::nullopt;
}

std::vector<std::string> absent_categories(const SyntheticScene& scene) {
  std::vector<std::string> out;
  for (const auto& c : scene_categories())
    if (!scene.has(c)) out.push_back(c);
  return out;
}

// Two distinct categories; the second is absent when the scene has only one.
std::pair<std::string, std::string> pick_pair(const SyntheticScene& scene, Rng& rng) {
  auto cats = scene.categories();
  if (cats.empty()) return {"apple", "car"};
  rng.shuffle(cats);
  if (cats.size() >= 2) return {cats[0], cats[1]};
  auto absent = absent_categories(scene);
  return {cats[0], absent.empty() ? cats[0] : rng.pick(absent)};
}

std::string other_color(const std::string& color, Rng& rng) {
  std::vector<std::string> options;
  for (const auto& c : scene_colors())
    if (c != color) options.push_back(c);
  return rng.pick(options);
}

const std::string& max_count_category(const SyntheticScene& scene, Rng& rng) {
  static const std::string kFallback = "apple";
  const auto counts = scene.counts();
  if (counts.empty()) return kFallback;
  int best = 0;
  for (const auto& [c, n] : counts) best = std::max(best, n);
  std::vector<const std::string*> ties;
  for (const auto& [c, n] : counts)
    if (n == best) ties.push_back(&c);
  return *ties[rng.below(ties.size())];
}

std::string natural_list(const std::vector<SceneSpecEntry>& spec) {
  std::vector<std::string> parts;
  for (const auto& e : spec)
    parts.push_back(std::to_string(e.count) + " " + (e.color.empty() ? "" : e.color + " ") +
                    plural(e.category, e.count));
  return parts.empty() ? "an empty table" : join(parts, ", ");
}

}  // namespace

std::string_view probe_name(ProbeKind kind) {
  switch (kind) {
    case ProbeKind::Counting: return "counting";
    case ProbeKind::Color: return "color";
    case ProbeKind::Spatial: return "spatial relation";
    case ProbeKind::Presence: return "presence";
    case ProbeKind::Size: return "size comparison";
    case ProbeKind::Knowledge: return "world knowledge";
  }
  return "counting";
}

ProbeKind probe_kind(int template_idx) {
  if (template_idx < 0 || template_idx >= kProbeTemplateCount)
    throw Error(ErrorCode::ProtocolError, "template index out of range: " + std::to_string(template_idx));
  return static_cast<ProbeKind>(template_idx);
}

std::string format_probe(const ProbeQuestion& q) {
  switch (q.kind) {
    case ProbeKind::Counting: return "How many " + plural(q.subject, 2) + " are in the image?";
    case ProbeKind::Color: return "What color is the " + q.subject + "?";
    case ProbeKind::Spatial: return "Is the " + q.subject + " to the left of the " + q.other + "?";
    case ProbeKind::Presence: return "Is there " + with_article(q.subject) + " in the image?";
    case ProbeKind::Size: return "Which is larger, the " + q.subject + " or the " + q.other + "?";
    case ProbeKind::Knowledge: return "What is the " + q.subject + " typically used for?";
  }
  return {};
}

std::optional<ProbeQuestion> parse_probe(std::string_view question) {
  const auto w = question_words(question);
  auto at = [&](std::size_t i) -> std::string_view { return i < w.size() ? w[i] : std::string_view(); };
  ProbeQuestion q;
  if (at(0) == "how" && at(1) == "many" && w.size() >= 3) {
    q.kind = ProbeKind::Counting;
    q.subject = singular(w[2]);
    return q;
  }
  if (at(0) == "what" && (at(1) == "color" || at(1) == "colour") && (at(2) == "is" || at(2) == "are") &&
      at(3) == "the" && w.size() >= 5) {
    q.kind = ProbeKind::Color;
    q.subject = singular(w[4]);
    return q;
  }
  if (at(0) == "is" && at(1) == "the" && w.size() >= 3) {
    std::size_t i = 3;
    if (at(i) == "to" && at(i + 1) == "the") i += 2;
    if (at(i) == "left" && at(i + 1) == "of" && at(i + 2) == "the" && w.size() > i + 3) {
      q.kind = ProbeKind::Spatial;
      q.subject = singular(w[2]);
      q.other = singular(w[i + 3]);
      return q;
    }
  }
  if (at(0) == "is" && at(1) == "there" && (at(2) == "a" || at(2) == "an" || at(2) == "any") &&
      w.size() >= 4) {
    q.kind = ProbeKind::Presence;
    q.subject = singular(w[3]);
    return q;
  }
  if (at(0) == "which" && at(1) == "is" && (at(2) == "larger" || at(2) == "bigger") && at(3) == "the" &&
      at(5) == "or" && at(6) == "the" && w.size() >= 8) {
    q.kind = ProbeKind::Size;
    q.subject = singular(w[4]);
    q.other = singular(w[7]);
    return q;
  }
  if (at(0) == "what" && at(1) == "is") {
    std::size_t i = 2;
    if (at(i) == "the" || at(i) == "a" || at(i) == "an") ++i;
    std::size_t j = i + 1;
    if (at(j) == "typically") ++j;
    if (w.size() > i && at(j) == "used" && at(j + 1) == "for") {
      q.kind = ProbeKind::Knowledge;
      q.subject = singular(w[i]);
      return q;
    }
  }
  return std::nullopt;
}

std::string knowledge_of(std::string_view category) {
  static const std::map<std::string, std::string, std::less<>> kTable = {
      {"apple", "eating"},        {"banana", "eating"},   {"bird", "birdwatching"},
      {"book", "reading"},        {"car", "transportation"}, {"chair", "sitting"},
      {"clock", "telling time"},  {"cup", "drinking"},    {"dog", "companionship"},
      {"kite", "flying"}};
  auto it = kTable.find(category);
  return it == kTable.end() ? "unknown" : it->second;
}

bool Weaknesses::faithful() const {
  return !count_cap && color_confusion.empty() && hallucinate.empty() && !spatial_flip &&
         !size_invert && knowledge_override.empty();
}

std::string faithful_answer(const ProbeQuestion& q, const SyntheticScene& scene) {
  switch (q.kind) {
    case ProbeKind::Counting:
      return std::to_string(scene.count(q.subject));
    case ProbeKind::Color: {
      const SceneObject* o = scene.first(q.subject);
      return o ? o->color : "none";
    }
    case ProbeKind::Spatial: {
      auto a = head_index(scene, q.subject);
      auto b = head_index(scene, q.other);
      if (!a || !b || *a == *b) return "none";
      const bool left = std::any_of(scene.relations.begin(), scene.relations.end(), [&](const Relation& r) {
        return r.subject == *a && r.object == *b && r.predicate == "left_of";
      });
      return left ? "yes" : "no";
    }
    case ProbeKind::Presence:
      return scene.has(q.subject) ? "yes" : "no";
    case ProbeKind::Size: {
      const SceneObject* a = scene.first(q.subject);
      const SceneObject* b = scene.first(q.other);
      if (!a || !b || q.subject == q.other) return "none";
      if (a->size_rank == b->size_rank) return "same";
      return a->size_rank > b->size_rank ? q.subject : q.other;
    }
    case ProbeKind::Knowledge:
      return knowledge_of(q.subject);
  }
  return std::string(kCannotTell);
}

std::string answer_question(std::string_view question, const SyntheticScene& scene,
                            const Weaknesses& wk) {
  const auto q = parse_probe(question);
  if (!q) return std::string(kCannotTell);
  std::string answer = faithful_answer(*q, scene);
  switch (q->kind) {
    case ProbeKind::Counting: {
      const int n = scene.count(q->subject);
      if (wk.count_cap && n > *wk.count_cap) answer = std::to_string(*wk.count_cap);
      break;
    }
    case ProbeKind::Color: {
      auto it = wk.color_confusion.find(answer);
      if (it != wk.color_confusion.end()) answer = it->second;
      break;
    }
    case ProbeKind::Spatial:
      if (wk.spatial_flip && (answer == "yes" || answer == "no")) answer = answer == "yes" ? "no" : "yes";
      break;
    case ProbeKind::Presence:
      if (answer == "no" && wk.hallucinate.count(q->subject)) answer = "yes";
      break;
    case ProbeKind::Size:
      if (wk.size_invert && answer != "none" && answer != "same")
        answer = answer == q->subject ? q->other : q->subject;
      break;
    case ProbeKind::Knowledge: {
      auto it = wk.knowledge_override.find(q->subject);
      if (it != wk.knowledge_override.end()) answer = it->second;
      break;
    }
  }
  return answer;
}

std::string normalize_answer(std::string_view answer) {
  static const std::array<std::string_view, 21> kNumbers = {
      "zero",  "one",    "two",    "three",    "four",     "five",    "six",
      "seven", "eight",  "nine",   "ten",      "eleven",   "twelve",  "thirteen",
      "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty"};
  std::string s = to_lower(answer);
  for (char& c : s)
    if (std::ispunct(static_cast<unsigned char>(c))) c = ' ';
  std::vector<std::string> out;
  for (auto& w : split_words(s)) {
    if (w == "a" || w == "an" || w == "the") continue;
    auto it = std::find(kNumbers.begin(), kNumbers.end(), w);
    if (it != kNumbers.end()) w = std::to_string(it - kNumbers.begin());
    out.push_back(std::move(w));
  }
  return join(out, " ");
}

// ---- backends ----

std::string MockAnswerer::chat(const ChatRequest& request) {
  if (request.images.empty() || !request.images.front().scene) return std::string(kCannotTell);
  return answer_question(request.text, *request.images.front().scene, weaknesses_);
}

std::string MockAuditor::propose_question(ProbeKind kind, const SyntheticScene& scene, Rng& rng) {
  ProbeQuestion q{kind, {}, {}};
  const auto present = scene.categories();
  switch (kind) {
    case ProbeKind::Counting:
      q.subject = max_count_category(scene, rng);
      break;
    case ProbeKind::Color:
    case ProbeKind::Knowledge:
      q.subject = present.empty() ? "apple" : rng.pick(present);
      break;
    case ProbeKind::Spatial:
    case ProbeKind::Size: {
      auto [a, b] = pick_pair(scene, rng);
      q.subject = a;
      q.other = b;
      break;
    }
    case ProbeKind::Presence: {
      auto absent = absent_categories(scene);
      q.subject = absent.empty() ? rng.pick(present) : rng.pick(absent);
      break;
    }
  }
  return format_probe(q);
}

std::string MockAuditor::propose_caption(ProbeKind kind, const SyntheticScene& scene, Rng& rng) {
  auto spec = describe(scene);
  switch (kind) {
    case ProbeKind::Counting:
      for (auto& e : spec) ++e.count;
      break;
    case ProbeKind::Color:
      if (!spec.empty()) {
        auto& e = spec[rng.below(spec.size())];
        e.color = other_color(e.color, rng);
      }
      break;
    case ProbeKind::Presence:
      if (spec.size() >= 2) spec.erase(spec.begin() + static_cast<long>(rng.below(spec.size())));
      break;
    case ProbeKind::Knowledge: {
      auto absent = absent_categories(scene);
      if (!absent.empty()) spec.push_back({1, rng.pick(scene_colors()), rng.pick(absent)});
      break;
    }
    case ProbeKind::Spatial:
    case ProbeKind::Size:
      break;
  }
  return "A detailed, literal photo showing " + natural_list(spec) + ". " + format_scene_tail(spec);
}

std::string MockAuditor::propose_edit(ProbeKind kind, const SyntheticScene& scene, Rng& rng) {
  const auto present = scene.categories();
  const std::string any = present.empty() ? "apple" : rng.pick(present);
  EditCommand cmd;
  switch (kind) {
    case ProbeKind::Counting:
      cmd.verb = EditVerb::Add;
      cmd.amount = 2;
      cmd.category = max_count_category(scene, rng);
      break;
    case ProbeKind::Color: {
      cmd.verb = EditVerb::Recolor;
      cmd.category = any;
      const SceneObject* o = scene.first(any);
      cmd.color = other_color(o ? o->color : "", rng);
      break;
    }
    case ProbeKind::Spatial: {
      cmd.verb = EditVerb::Move;
      cmd.category = any;
      const SceneObject* o = scene.first(any);
      do {
        cmd.cell = {rng.between(0, kGridSize - 1), rng.between(0, kGridSize - 1)};
      } while (o && cmd.cell == o->position);
      break;
    }
    case ProbeKind::Presence:
      cmd.verb = EditVerb::Remove;
      cmd.category = any;
      break;
    case ProbeKind::Size:
    case ProbeKind::Knowledge: {
      auto absent = absent_categories(scene);
      cmd.verb = EditVerb::Add;
      cmd.amount = 1;
      cmd.category = absent.empty() ? any : rng.pick(absent);
      break;
    }
  }
  return format_edit(cmd);
}

std::string MockAuditor::chat(const ChatRequest& request) {
  if (!request.task) throw Error(ErrorCode::ProtocolError, "mock auditor requires a task hint");
  if (request.images.empty() || !request.images.front().scene)
    throw Error(ErrorCode::ImageUnresolvable, "mock auditor requires a scene image");
  const SyntheticScene& scene = *request.images.front().scene;
  const ProbeKind kind = probe_kind(request.template_idx.value_or(0));
  Rng rng(derive_seed(request.sampling.seed.value_or(0), static_cast<int>(*request.task),
                      static_cast<int>(kind)));
  switch (*request.task) {
    case AuditorTask::Question: return propose_question(kind, scene, rng);
    case AuditorTask::Caption: return propose_caption(kind, scene, rng);
    case AuditorTask::Edit: return propose_edit(kind, scene, rng);
  }
  return {};
}

ImageRef MockImageGenerator::generate_image(const std::string& caption, std::uint64_t seed) {
  auto spec = parse_scene_tail(caption);
  if (!spec) throw Error(ErrorCode::CaptionUnparseable, "caption has no [SCENE {...}] tail");
  ImageRef out;
  out.uri = "mock://generated/" + hex64(derive_seed(fnv1a64(caption), seed));
  out.width = kMockImageSize;
  out.height = kMockImageSize;
  out.origin = ImageOrigin::Generated;
  out.scene = scene_from_spec(*spec, seed);
  return out;
}

ImageRef MockImageEditor::edit_image(const ImageRef& image, const std::string& command,
                                     std::uint64_t seed) {
  if (!image.scene) throw Error(ErrorCode::ImageUnresolvable, "mock editor requires a scene image");
  auto cmd = parse_edit(command);
  if (!cmd) throw Error(ErrorCode::EditUnparseable, "cannot parse edit '" + command + "'");
  auto edited = apply_edit(*image.scene, *cmd, seed);
  if (!edited) throw Error(ErrorCode::EditUnparseable, "edit '" + command + "' has no target");
  ImageRef out;
  out.uri = "mock://edited/" + hex64(derive_seed(fnv1a64(image.uri + "\n" + command), seed));
  out.width = image.width > 0 ? image.width : kMockImageSize;
  out.height = image.height > 0 ? image.height : kMockImageSize;
  out.origin = ImageOrigin::Edited;
  out.parent = image.uri;
  out.scene = std::move(*edited);
  return out;
}

std::string MockJudge::chat(const ChatRequest& request) {
  auto pair = parse_judge_prompt(request.text);
  if (!pair) return "UNSURE";
  return normalize_answer(pair->first) == normalize_answer(pair->second) ? "SAME" : "DIFFERENT";
}

std::string MockSummarizer::chat(const ChatRequest& request) {
  auto req = parse_summarizer_prompt(request.text);
  if (!req) throw Error(ErrorCode::ProtocolError, "unrecognized summarizer request");
  auto q = parse_probe(req->question);
  std::string category = "other";
  std::string cause = "unrecognized question form";
  if (q) {
    switch (q->kind) {
      case ProbeKind::Counting: {
        category = "counting";
        const std::string t = normalize_answer(req->target_answer);
        const std::string c = normalize_answer(req->consensus);
        const bool capped = !t.empty() && !c.empty() && std::all_of(t.begin(), t.end(), ::isdigit) &&
                            std::all_of(c.begin(), c.end(), ::isdigit) && std::stoi(t) < std::stoi(c);
        cause = capped ? "reports capped count above threshold" : "miscounts objects";
        break;
      }
      case ProbeKind::Color:
        category = "color";
        cause = "confuses object colors";
        break;
      case ProbeKind::Spatial:
        category = "spatial relation";
        cause = "misjudges left-right relations";
        break;
      case ProbeKind::Presence:
        category = "hallucination";
        cause = "affirms absent objects";
        break;
      case ProbeKind::Size:
        category = "size comparison";
        cause = "misjudges relative object size";
        break;
      case ProbeKind::Knowledge:
        category = "world knowledge";
        cause = "lacks world knowledge about object use";
        break;
    }
  }
  return "CATEGORY: " + category + "\nROOT_CAUSE: " + cause;
}

}  // namespace audit
