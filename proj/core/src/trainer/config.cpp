#include "unmt/trainer/config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace unmt::trainer {

namespace {

struct Field {
  std::string name;
  std::function<void(EMConfig&, const std::string&)> set;
  std::function<std::string(const EMConfig&)> get;
};

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw Error(fmt::format("config: bad value '{}' for {}", v, key));
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(fmt::format("config: bad boolean '{}' for {}", v, key));
}

// Member-pointer chains are awkward across nested structs, so each field gets
// a small accessor lambda returning a reference.
template <typename T, typename Access>
Field number(std::string name, Access access) {
  return {name,
          [name, access](EMConfig& c, const std::string& v) { access(c) = parse_number<T>(name, v); },
          [access](const EMConfig& c) { return fmt::format("{}", access(const_cast<EMConfig&>(c))); }};
}

template <typename Access>
Field boolean(std::string name, Access access) {
  return {name, [name, access](EMConfig& c, const std::string& v) { access(c) = parse_bool(name, v); },
          [access](const EMConfig& c) { return std::string(access(const_cast<EMConfig&>(c)) ? "true" : "false"); }};
}

template <typename Access>
Field path(std::string name, Access access) {
  return {name, [access](EMConfig& c, const std::string& v) { access(c) = v; },
          [access](const EMConfig& c) { return access(const_cast<EMConfig&>(c)).string(); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = [] {
    std::vector<Field> f;
    f.push_back(number<std::uint64_t>("seed", [](EMConfig& c) -> auto& { return c.seed; }));
    f.push_back(path("x_corpus", [](EMConfig& c) -> auto& { return c.x_corpus; }));
    f.push_back(path("y_corpus", [](EMConfig& c) -> auto& { return c.y_corpus; }));
    f.push_back(path("dev_x", [](EMConfig& c) -> auto& { return c.dev_x; }));
    f.push_back(path("dev_y", [](EMConfig& c) -> auto& { return c.dev_y; }));
    f.push_back(path("gold_dictionary", [](EMConfig& c) -> auto& { return c.gold_dictionary; }));
    f.push_back(number<std::size_t>("base_vocab", [](EMConfig& c) -> auto& { return c.base.vocab_size; }));
    f.push_back(number<std::size_t>("base_sentences", [](EMConfig& c) -> auto& { return c.base.sentences; }));
    f.push_back(number<std::size_t>("base_min_length", [](EMConfig& c) -> auto& { return c.base.min_length; }));
    f.push_back(number<std::size_t>("base_max_length", [](EMConfig& c) -> auto& { return c.base.max_length; }));
    f.push_back(number<std::size_t>("base_successors", [](EMConfig& c) -> auto& { return c.base.successors; }));
    f.push_back(number<double>("base_zipf", [](EMConfig& c) -> auto& { return c.base.zipf_exponent; }));
    f.push_back(number<std::uint64_t>("base_seed", [](EMConfig& c) -> auto& { return c.base.seed; }));
    f.push_back(number<std::uint64_t>("pair_seed", [](EMConfig& c) -> auto& { return c.pair.seed; }));
    f.push_back(number<int>("reorder_window", [](EMConfig& c) -> auto& { return c.pair.reorder_window; }));
    f.push_back(number<double>("noise_rate", [](EMConfig& c) -> auto& { return c.pair.noise_rate; }));
    f.push_back(number<double>("mobile_fraction", [](EMConfig& c) -> auto& { return c.pair.mobile_fraction; }));
    f.push_back(number<std::size_t>("dev_size", [](EMConfig& c) -> auto& { return c.pair.dev_size; }));
    f.push_back(number<std::size_t>("max_sentence_len", [](EMConfig& c) -> auto& { return c.max_sentence_len; }));
    f.push_back(number<std::size_t>("vocab_cap", [](EMConfig& c) -> auto& { return c.vocab_cap; }));
    f.push_back(number<int>("emb_dim", [](EMConfig& c) -> auto& { return c.skipgram.dim; }));
    f.push_back(number<int>("emb_window", [](EMConfig& c) -> auto& { return c.skipgram.window; }));
    f.push_back(number<int>("emb_negatives", [](EMConfig& c) -> auto& { return c.skipgram.negatives; }));
    f.push_back(number<int>("emb_epochs", [](EMConfig& c) -> auto& { return c.skipgram.epochs; }));
    f.push_back(number<double>("emb_learning_rate", [](EMConfig& c) -> auto& { return c.skipgram.learning_rate; }));
    f.push_back(number<double>("emb_subsample", [](EMConfig& c) -> auto& { return c.skipgram.subsample; }));
    f.push_back(number<int>("emb_threads", [](EMConfig& c) -> auto& { return c.skipgram.threads; }));
    f.push_back(number<int>("align_rounds", [](EMConfig& c) -> auto& { return c.align.rounds; }));
    f.push_back(number<std::size_t>("align_dict_size", [](EMConfig& c) -> auto& { return c.align.dict_size; }));
    f.push_back(number<std::size_t>("align_search_vocab", [](EMConfig& c) -> auto& { return c.align.search_vocab; }));
    f.push_back(number<double>("lambda", [](EMConfig& c) -> auto& { return c.induce.lambda; }));
    f.push_back(number<int>("k", [](EMConfig& c) -> auto& { return c.induce.k; }));
    f.push_back(number<int>("lm_order", [](EMConfig& c) -> auto& { return c.lm_order; }));
    for (std::size_t i = 0; i < smt::LogLinearWeights::names().size(); ++i) {
      const std::string name = "weight_" + smt::LogLinearWeights::names()[i];
      f.push_back({name, [i, name](EMConfig& c, const std::string& v) { c.weights.at(i) = parse_number<double>(name, v); },
                   [i](const EMConfig& c) { return fmt::format("{}", c.weights.at(i)); }});
    }
    f.push_back(path("weights_file", [](EMConfig& c) -> auto& { return c.weights_file; }));
    f.push_back(number<int>("distortion_limit", [](EMConfig& c) -> auto& { return c.decoder.distortion_limit; }));
    f.push_back(number<std::size_t>("beam_width", [](EMConfig& c) -> auto& { return c.decoder.beam_width; }));
    f.push_back(number<std::size_t>("stack_size", [](EMConfig& c) -> auto& { return c.decoder.stack_size; }));
    f.push_back({"warmup",
                 [](EMConfig& c, const std::string& v) {
                   if (v == "smt") c.warmup = Warmup::kSmt;
                   else if (v == "word") c.warmup = Warmup::kWordByWord;
                   else throw Error("config: warmup must be smt or word");
                 },
                 [](const EMConfig& c) { return std::string(c.warmup == Warmup::kSmt ? "smt" : "word"); }});
    f.push_back(number<std::size_t>("sample_size", [](EMConfig& c) -> auto& { return c.sample_size; }));
    f.push_back(number<int>("max_iterations", [](EMConfig& c) -> auto& { return c.max_iterations; }));
    f.push_back(number<double>("convergence_bleu", [](EMConfig& c) -> auto& { return c.convergence_bleu; }));
    f.push_back(number<int>("max_phrase_len", [](EMConfig& c) -> auto& { return c.phrase.max_phrase_len; }));
    f.push_back(number<int>("smt_min_count", [](EMConfig& c) -> auto& { return c.phrase.min_count; }));
    f.push_back(number<std::size_t>("max_targets", [](EMConfig& c) -> auto& { return c.phrase.max_targets; }));
    f.push_back(number<int>("ibm1_iterations", [](EMConfig& c) -> auto& { return c.phrase.ibm1_iterations; }));
    f.push_back(number<int>("decode_threads", [](EMConfig& c) -> auto& { return c.decode_threads; }));
    f.push_back(number<int>("nmt_emb", [](EMConfig& c) -> auto& { return c.nmt.emb; }));
    f.push_back(number<int>("nmt_hidden", [](EMConfig& c) -> auto& { return c.nmt.hidden; }));
    f.push_back({"optimizer",
                 [](EMConfig& c, const std::string& v) {
                   if (v == "adam") c.optimizer.kind = nmt::OptimizerKind::kAdam;
                   else if (v == "sgd") c.optimizer.kind = nmt::OptimizerKind::kSgd;
                   else throw Error("config: optimizer must be adam or sgd");
                 },
                 [](const EMConfig& c) {
                   return std::string(c.optimizer.kind == nmt::OptimizerKind::kAdam ? "adam" : "sgd");
                 }});
    f.push_back(number<double>("learning_rate", [](EMConfig& c) -> auto& { return c.optimizer.learning_rate; }));
    f.push_back(number<double>("clip", [](EMConfig& c) -> auto& { return c.optimizer.clip; }));
    f.push_back(number<double>("lr_final_scale", [](EMConfig& c) -> auto& { return c.lr_final_scale; }));
    f.push_back(number<int>("batch_size", [](EMConfig& c) -> auto& { return c.batch_size; }));
    f.push_back(number<int>("init_phase_a_steps", [](EMConfig& c) -> auto& { return c.init_phase_a_steps; }));
    f.push_back(number<int>("init_phase_b_steps", [](EMConfig& c) -> auto& { return c.init_phase_b_steps; }));
    f.push_back(number<int>("phase_a_steps", [](EMConfig& c) -> auto& { return c.phase_a_steps; }));
    f.push_back(number<int>("phase_b_steps", [](EMConfig& c) -> auto& { return c.phase_b_steps; }));
    f.push_back(number<int>("max_decode_len", [](EMConfig& c) -> auto& { return c.max_decode_len; }));
    f.push_back(boolean("enable_r2l", [](EMConfig& c) -> auto& { return c.enable_r2l; }));
    f.push_back(number<int>("r2l_aux_steps", [](EMConfig& c) -> auto& { return c.r2l_aux_steps; }));
    f.push_back(number<int>("r2l_finetune_steps", [](EMConfig& c) -> auto& { return c.r2l_finetune_steps; }));
    return f;
  }();
  return kFields;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

void validate(const EMConfig& c) {
  auto positive = [](bool ok, const char* what) {
    if (!ok) throw Error(fmt::format("config: {} must be positive", what));
  };
  positive(c.sample_size > 0, "sample_size");
  positive(c.max_iterations >= 0, "max_iterations");
  positive(c.convergence_bleu >= 0.0, "convergence_bleu");
  positive(c.batch_size > 0, "batch_size");
  positive(c.max_decode_len > 0, "max_decode_len");
  positive(c.lm_order >= 1 && c.lm_order <= 5, "lm_order (1..5)");
  positive(c.phrase.min_count >= 1, "smt_min_count");
  positive(c.phrase.max_phrase_len >= 1 && c.phrase.max_phrase_len <= 5, "max_phrase_len (1..5)");
  positive(c.induce.lambda > 0.0, "lambda");
  positive(c.lr_final_scale > 0.0 && c.lr_final_scale <= 1.0, "lr_final_scale (at most 1)");
  positive(c.induce.k >= 1, "k");
  positive(c.init_phase_a_steps >= 0 && c.init_phase_b_steps >= 0 && c.phase_a_steps >= 0 && c.phase_b_steps >= 0,
           "phase step counts (or zero)");
  positive(c.pair.reorder_window >= 0, "reorder_window (or zero)");
  if (c.pair.noise_rate < 0.0 || c.pair.noise_rate >= 1.0) throw Error("config: noise_rate must be in [0,1)");
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> kKeys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.name);
    return k;
  }();
  return kKeys;
}

EMConfig parse_config(const std::string& text, EMConfig c) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(fmt::format("config line {}: expected key = value", lineno));
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    auto it = std::find_if(fields().begin(), fields().end(), [&](const Field& f) { return f.name == key; });
    if (it == fields().end()) throw Error(fmt::format("config line {}: unknown key '{}'", lineno, key));
    it->set(c, value);
  }
  validate(c);
  return c;
}

EMConfig load_config(const std::filesystem::path& p, EMConfig base) {
  std::ifstream in(p);
  if (!in) throw Error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  EMConfig c = parse_config(ss.str(), std::move(base));
  // Relative data paths are taken relative to the config file.
  auto fix = [&](std::filesystem::path& f) {
    if (!f.empty() && f.is_relative()) f = p.parent_path() / f;
  };
  fix(c.x_corpus);
  fix(c.y_corpus);
  fix(c.dev_x);
  fix(c.dev_y);
  fix(c.gold_dictionary);
  fix(c.weights_file);
  return c;
}

std::string format_config(const EMConfig& c) {
  std::string out;
  for (const auto& f : fields()) out += fmt::format("{} = {}\n", f.name, f.get(c));
  return out;
}

}  // namespace unmt::trainer
