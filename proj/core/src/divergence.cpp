#include "audit/divergence.hpp"

#include <future>

#include "audit/error.hpp"
#include "audit/prompts.hpp"
#include "audit/util.hpp"

namespace audit {

std::string_view to_string(ConsensusMode m) { return m == ConsensusMode::Unanimous ? "unanimous" : "fraction"; }

std::string_view to_string(FilterOutcome o) {
  switch (o) {
    case FilterOutcome::Accepted: return "accepted";
    case FilterOutcome::NoConsensus: return "no_consensus";
    case FilterOutcome::JudgeError: return "judge_error";
  }
  return "no_consensus";
}

ConsensusMode consensus_mode_from_string(std::string_view s) {
  if (s == "unanimous") return ConsensusMode::Unanimous;
  if (s == "fraction") return ConsensusMode::Fraction;
  throw Error(ErrorCode::ConfigError, "unknown consensus mode '" + std::string(s) + "'");
}

FilterOutcome filter_outcome_from_string(std::string_view s) {
  for (FilterOutcome o : {FilterOutcome::Accepted, FilterOutcome::NoConsensus, FilterOutcome::JudgeError})
    if (to_string(o) == s) return o;
  throw Error(ErrorCode::FormatError, "unknown filter outcome '" + std::string(s) + "'");
}

void ConsensusPolicy::validate() const {
  if (mode == ConsensusMode::Fraction && !(threshold > 0.5 && threshold <= 1.0))
    throw Error(ErrorCode::ConfigError, "consensus threshold must lie in (0.5, 1]");
  if (judge_handle.empty()) throw Error(ErrorCode::ConfigError, "consensus needs a judge handle");
}

void to_json(nlohmann::json& j, const DisagreementRecord& r) {
  auto refs = nlohmann::json::array();
  for (const auto& a : r.reference_answers) refs.push_back({{"handle_id", a.handle_id}, {"answer", a.answer}});
  auto transcript = nlohmann::json::array();
  for (const auto& t : r.judge_transcript) transcript.push_back({{"a", t.a}, {"b", t.b}, {"differs", t.differs}});
  j = {{"id", r.id},
       {"exemplar_id", r.exemplar_id},
       {"target_answer", r.target_answer},
       {"reference_answers", refs},
       {"consensus", r.consensus ? nlohmann::json(*r.consensus) : nlohmann::json(nullptr)},
       {"signal", r.signal},
       {"filter_outcome", std::string(to_string(r.filter_outcome))},
       {"judge_transcript", transcript}};
  if (!r.error.empty()) j["error"] = r.error;
}

void from_json(const nlohmann::json& j, DisagreementRecord& r) {
  r = {};
  r.id = j.at("id").get<std::string>();
  r.exemplar_id = j.at("exemplar_id").get<std::string>();
  r.target_answer = j.value("target_answer", "");
  for (const auto& a : j.value("reference_answers", nlohmann::json::array()))
    r.reference_answers.push_back({a.at("handle_id").get<std::string>(), a.at("answer").get<std::string>()});
  if (j.contains("consensus") && !j["consensus"].is_null()) r.consensus = j["consensus"].get<std::string>();
  r.signal = j.value("signal", 0);
  r.filter_outcome = filter_outcome_from_string(j.value("filter_outcome", "no_consensus"));
  for (const auto& t : j.value("judge_transcript", nlohmann::json::array()))
    r.judge_transcript.push_back({t.at("a").get<std::string>(), t.at("b").get<std::string>(), t.at("differs").get<int>()});
  r.error = j.value("error", "");
}

namespace detail {

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

bool meets_threshold(std::size_t cluster, std::size_t total, const ConsensusPolicy& policy) {
  if (policy.mode == ConsensusMode::Unanimous) return cluster == total;
  return static_cast<double>(cluster) / static_cast<double>(total) >= policy.threshold - 1e-12;
}

}  // namespace detail

Scorer::Scorer(Gateway& gateway, std::string target, std::vector<std::string> references,
               ConsensusPolicy policy, int parallelism)
    : gateway_(gateway),
      target_(std::move(target)),
      references_(std::move(references)),
      policy_(std::move(policy)),
      parallelism_(std::max(1, parallelism)) {
  policy_.validate();
  if (references_.empty()) throw Error(ErrorCode::ConfigError, "reference ensemble is empty");
  for (const auto& r : references_)
    if (r == target_) throw Error(ErrorCode::ConfigError, "target '" + target_ + "' is in the reference set");
  if (gateway_.handle(target_).role != Role::Target)
    throw Error(ErrorCode::ConfigError, "'" + target_ + "' is not a target handle");
  for (const auto& r : references_)
    if (gateway_.handle(r).role != Role::Reference)
      throw Error(ErrorCode::ConfigError, "'" + r + "' is not a reference handle");
  if (gateway_.handle(policy_.judge_handle).role != Role::Judge)
    throw Error(ErrorCode::ConfigError, "'" + policy_.judge_handle + "' is not a judge handle");
}

int Scorer::judge(const std::string& a, const std::string& b, std::vector<Judgement>* transcript) {
  const std::string ta = trim(a);
  const std::string tb = trim(b);
  if (ta.empty() || tb.empty()) throw Error(ErrorCode::JudgeError, "cannot judge an empty answer");
  int differs = 0;
  if (ta != tb) {
    ChatRequest req;
    req.text = judge_prompt(ta, tb);
    req.sampling = default_sampling(Role::Judge);
    std::string reply;
    try {
      reply = trim(gateway_.chat(policy_.judge_handle, req).text);
    } catch (const Error& e) {
      throw Error(ErrorCode::JudgeError, e.what());
    }
    if (reply == "SAME") differs = 0;
    else if (reply == "DIFFERENT") differs = 1;
    else throw Error(ErrorCode::JudgeError, "judge replied '" + reply + "'");
  }
  if (transcript) transcript->push_back({ta, tb, differs});
  return differs;
}

std::optional<std::string> Scorer::consensus(const std::vector<std::string>& answers,
                                             std::vector<Judgement>* transcript) {
  if (answers.size() < 2) throw Error(ErrorCode::ProtocolError, "consensus needs at least two answers");
  auto idx = consensus_index(answers.size(), policy_, [&](std::size_t i, std::size_t j) {
    return judge(answers[i], answers[j], transcript);
  });
  if (!idx) return std::nullopt;
  return answers[*idx];
}

DisagreementRecord Scorer::score(const Exemplar& exemplar, const std::string& record_id) {
  DisagreementRecord rec;
  rec.id = record_id.empty() ? exemplar.id + "/r" : record_id;
  rec.exemplar_id = exemplar.id;

  ChatRequest req;
  req.text = exemplar.question;
  req.images = {exemplar.image};
  req.sampling = default_sampling(Role::Target);

  std::vector<std::string> handles{target_};
  handles.insert(handles.end(), references_.begin(), references_.end());
  std::vector<std::string> answers(handles.size());

  try {
    if (parallelism_ > 1) {
      std::vector<std::future<std::string>> futures;
      for (const auto& h : handles)
        futures.push_back(std::async(std::launch::async, [&, h] { return trim(gateway_.chat(h, req).text); }));
      for (std::size_t i = 0; i < futures.size(); ++i) answers[i] = futures[i].get();
    } else {
      for (std::size_t i = 0; i < handles.size(); ++i) answers[i] = trim(gateway_.chat(handles[i], req).text);
    }
    rec.target_answer = answers[0];
    for (std::size_t i = 1; i < handles.size(); ++i) rec.reference_answers.push_back({handles[i], answers[i]});

    std::vector<std::string> ref_answers(answers.begin() + 1, answers.end());
    if (ref_answers.size() == 1) {
      rec.consensus = ref_answers[0];
    } else {
      rec.consensus = consensus(ref_answers, &rec.judge_transcript);
    }
    if (!rec.consensus) {
      rec.filter_outcome = FilterOutcome::NoConsensus;
      rec.signal = 0;
      return rec;
    }
    rec.signal = judge(rec.target_answer, *rec.consensus, &rec.judge_transcript);
    rec.filter_outcome = FilterOutcome::Accepted;
  } catch (const Error& e) {
    rec.filter_outcome = FilterOutcome::JudgeError;
    rec.signal = 0;
    rec.consensus.reset();
    rec.error = e.what();
  }
  return rec;
}

}  // namespace audit
