#include "cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <iostream>
#include <optional>

#include "unmt/harness/bleu.hpp"
#include "unmt/harness/sweep.hpp"
#include "unmt/log.hpp"
#include "unmt/nmt/model.hpp"
#include "unmt/smt/model.hpp"
#include "unmt/trainer/em.hpp"

namespace unmt::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::string data;
  bool verbose = false;
  bool quiet = false;

  fs::path data_dir() const { return data.empty() ? fs::path(out) : fs::path(data); }
  fs::path out_dir() const {
    fs::create_directories(out);
    return out;
  }
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "key = value config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "random seed (overrides the config)");
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--data", c.data, "directory with prepared files (default: --out)");
  sub->add_flag("-v,--verbose", c.verbose, "debug logging");
  sub->add_flag("-q,--quiet", c.quiet, "no progress logging");
}

trainer::EMConfig load(const Common& c) {
  trainer::EMConfig cfg = c.config.empty() ? trainer::EMConfig{} : trainer::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

fs::path need(const fs::path& p) {
  if (!fs::exists(p)) throw Error("missing input file " + p.string());
  return p;
}

std::vector<Tokens> read_lines(const fs::path& p) { return read_token_lines(need(p), false); }

// Corpora from a `prepare` directory when it has one, otherwise from the config.
trainer::EMCorpora corpora(const Common& c, const trainer::EMConfig& cfg) {
  fs::path d = c.data_dir();
  if (!fs::exists(d / "x.txt") || !fs::exists(d / "vocab.x.txt")) return trainer::prepare_corpora(cfg);
  trainer::EMCorpora out;
  auto vx = std::make_shared<const Vocabulary>(Vocabulary::load(d / "vocab.x.txt"));
  auto vy = std::make_shared<const Vocabulary>(Vocabulary::load(need(d / "vocab.y.txt")));
  out.x = make_corpus("x", read_lines(d / "x.txt"), vx, (d / "x.txt").string());
  out.y = make_corpus("y", read_lines(d / "y.txt"), vy, (d / "y.txt").string());
  if (fs::exists(d / "dev.x.txt")) {
    out.dev_x = read_lines(d / "dev.x.txt");
    out.dev_y = read_lines(d / "dev.y.txt");
  }
  if (fs::exists(d / "gold.txt")) out.gold = load_gold_dictionary(d / "gold.txt");
  return out;
}

VocabPtr load_vocab(const fs::path& p) { return std::make_shared<const Vocabulary>(Vocabulary::load(need(p))); }

Direction parse_direction(const std::string& s) {
  if (s == "x2y") return Direction::kXToY;
  if (s == "y2x") return Direction::kYToX;
  throw UsageError("direction must be x2y or y2x");
}

char side(Direction d, bool target) { return (d == Direction::kXToY) != target ? 'x' : 'y'; }

bool is_checkpoint(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  char magic[8] = {};
  in.read(magic, 8);
  return in && std::string(magic, 8) == "UNMTNMT1";
}

std::string bleu_line(const harness::BleuReport& r) {
  return fmt::format("BLEU = {:.2f}, {:.1f}/{:.1f}/{:.1f}/{:.1f} (BP={:.3f}, ratio={:.3f}, hyp_len={}, ref_len={})",
                     r.bleu, 100 * r.precisions[0], 100 * r.precisions[1], 100 * r.precisions[2],
                     100 * r.precisions[3], r.brevity_penalty,
                     r.ref_length ? static_cast<double>(r.hyp_length) / r.ref_length : 0.0, r.hyp_length,
                     r.ref_length);
}

}  // namespace

int cli_main(int argc, const char* const* argv) { return cli_main(argc, argv, std::cin, std::cout, std::cerr); }

int cli_main(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"unmt: unsupervised NMT trained by alternating with phrase-based SMT"};
  app.name("unmt");
  app.require_subcommand(1);
  Common c;

  auto* prepare = app.add_subcommand("prepare", "tokenize corpora, build vocabularies (or generate the synthetic pair)");
  std::string in_x, in_y;
  prepare->add_option("--x", in_x, "raw x-side text")->check(CLI::ExistingFile);
  prepare->add_option("--y", in_y, "raw y-side text")->check(CLI::ExistingFile);

  auto* train_emb = app.add_subcommand("train-embeddings", "skip-gram embeddings for both sides");

  auto* align = app.add_subcommand("align-embeddings", "map x embeddings into the y space");
  std::string emb_src, emb_tgt;
  align->add_option("--src", emb_src, "x embeddings (default <data>/emb.x.txt)");
  align->add_option("--tgt", emb_tgt, "y embeddings (default <data>/emb.y.txt)");

  auto* induce = app.add_subcommand("induce-table", "word translation tables from aligned embeddings");
  induce->add_option("--src", emb_src, "aligned x embeddings (default <data>/emb.x.mapped.txt)");
  induce->add_option("--tgt", emb_tgt, "y embeddings (default <data>/emb.y.txt)");

  auto* train_lm = app.add_subcommand("train-lm", "n-gram language models for both sides");
  auto* init_smt = app.add_subcommand("init-smt", "SMT0 phrase tables from the word translation tables");
  auto* run_em = app.add_subcommand("run-em", "the full EM loop");

  auto* translate = app.add_subcommand("translate", "translate stdin to stdout");
  std::string model_path, direction = "x2y", src_vocab, tgt_vocab, lm_path, weights_path;
  int beam = 1;
  translate->add_option("--model", model_path, "NMT checkpoint or phrase table")->required()->check(CLI::ExistingFile);
  translate->add_option("--direction", direction, "x2y or y2x")->check(CLI::IsMember({"x2y", "y2x"}));
  translate->add_option("--src-vocab", src_vocab, "default <data>/vocab.<src>.txt");
  translate->add_option("--tgt-vocab", tgt_vocab, "default <data>/vocab.<tgt>.txt");
  translate->add_option("--lm", lm_path, "target LM for phrase tables (default <data>/lm.<tgt>.arpa)");
  translate->add_option("--weights", weights_path, "log-linear weights (default <data>/weights.txt if present)");
  translate->add_option("--beam", beam, "NMT beam size")->check(CLI::PositiveNumber);

  auto* evaluate = app.add_subcommand("evaluate", "corpus BLEU of a hypothesis file");
  std::string hyp_path, ref_path;
  bool by_length = false;
  evaluate->add_option("--hyp", hyp_path, "hypotheses")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--ref", ref_path, "references")->required()->check(CLI::ExistingFile);
  evaluate->add_flag("--by-length", by_length, "also report BLEU per reference-length bucket");

  auto* sweep = app.add_subcommand("sweep", "SMT0 dev BLEU over a grid of one initialization parameter");
  std::string param;
  std::vector<double> grid;
  sweep->add_option("--param", param, "lambda, k or vocab_cap")->required()->check(CLI::IsMember({"lambda", "k", "vocab_cap"}));
  sweep->add_option("--grid", grid, "ascending values")->required()->delimiter(',');

  for (auto* sub : app.get_subcommands([](const CLI::App*) { return true; })) add_common(sub, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  log::set_level(c.quiet ? log::Level::kQuiet : c.verbose ? log::Level::kDebug : log::Level::kInfo);
  try {
    const trainer::EMConfig cfg = load(c);
    const fs::path data = c.data_dir();

    if (prepare->parsed()) {
      trainer::EMConfig pc = cfg;
      if (!in_x.empty() || !in_y.empty()) {
        if (in_x.empty() || in_y.empty()) throw UsageError("--x and --y go together");
        pc.x_corpus = in_x;
        pc.y_corpus = in_y;
      }
      auto corp = trainer::prepare_corpora(pc);
      fs::path o = c.out_dir();
      write_sentences(o / "x.txt", *corp.x.vocab, corp.x.sentences);
      write_sentences(o / "y.txt", *corp.y.vocab, corp.y.sentences);
      corp.x.vocab->save(o / "vocab.x.txt");
      corp.y.vocab->save(o / "vocab.y.txt");
      if (!corp.dev_x.empty()) {
        write_token_lines(o / "dev.x.txt", corp.dev_x);
        write_token_lines(o / "dev.y.txt", corp.dev_y);
      }
      if (!corp.gold.empty()) save_gold_dictionary(o / "gold.txt", corp.gold);
      out << fmt::format("x: {} sentences, {} types\ny: {} sentences, {} types\n", corp.x.size(),
                         corp.x.vocab->size(), corp.y.size(), corp.y.vocab->size());
    } else if (train_emb->parsed()) {
      auto corp = corpora(c, cfg);
      SkipGramConfig sg = cfg.skipgram;
      sg.seed = cfg.seed;
      fs::path o = c.out_dir();
      save_embeddings(o / "emb.x.txt", train_skipgram(corp.x, sg));
      sg.seed = cfg.seed + 1;
      save_embeddings(o / "emb.y.txt", train_skipgram(corp.y, sg));
    } else if (align->parsed()) {
      auto x = load_embeddings(need(emb_src.empty() ? data / "emb.x.txt" : fs::path(emb_src)));
      auto y = load_embeddings(need(emb_tgt.empty() ? data / "emb.y.txt" : fs::path(emb_tgt)));
      auto r = align_embeddings(x, y, cfg.align);
      save_embeddings(c.out_dir() / "emb.x.mapped.txt", r.mapped);
      out << fmt::format("objective {:.4f}, {} dictionary pairs\n", r.objective, r.dictionary.size());
    } else if (induce->parsed()) {
      auto x = load_embeddings(need(emb_src.empty() ? data / "emb.x.mapped.txt" : fs::path(emb_src)));
      auto y = load_embeddings(need(emb_tgt.empty() ? data / "emb.y.txt" : fs::path(emb_tgt)));
      auto t_xy = trainer::induce_table(x, y, cfg);
      auto t_yx = trainer::induce_table(y, x, cfg);
      fs::path o = c.out_dir();
      save_translation_table(o / "table.x2y.txt", t_xy);
      save_translation_table(o / "table.y2x.txt", t_yx);
      if (fs::exists(data / "gold.txt"))
        out << fmt::format("word translation accuracy (top 200): {:.3f}\n",
                           harness::word_translation_accuracy(t_xy, load_gold_dictionary(data / "gold.txt"), 200));
    } else if (train_lm->parsed()) {
      auto corp = corpora(c, cfg);
      fs::path o = c.out_dir();
      NGramLM::train(corp.x, cfg.lm_order).save_arpa(o / "lm.x.arpa");
      NGramLM::train(corp.y, cfg.lm_order).save_arpa(o / "lm.y.arpa");
    } else if (init_smt->parsed()) {
      auto vx = load_vocab(data / "vocab.x.txt");
      auto vy = load_vocab(data / "vocab.y.txt");
      auto weights = trainer::smt_weights(cfg);
      fs::path o = c.out_dir();
      weights.save(o / "weights.txt");
      for (Direction d : {Direction::kXToY, Direction::kYToX}) {
        auto vs = d == Direction::kXToY ? vx : vy;
        auto vt = d == Direction::kXToY ? vy : vx;
        auto table = load_translation_table(need(data / fmt::format("table.{}.txt", direction_name(d))), vs, vt);
        auto lm = std::make_shared<const NGramLM>(
            NGramLM::load_arpa(need(data / fmt::format("lm.{}.arpa", side(d, true))), vt));
        auto model = smt::init_smt(table, lm, weights, cfg.decoder);
        model.table->save(o / fmt::format("phrase_table.{}.txt", direction_name(d)));
        if (fs::exists(data / "dev.x.txt")) {
          auto dx = read_lines(data / "dev.x.txt"), dy = read_lines(data / "dev.y.txt");
          double b = d == Direction::kXToY ? trainer::evaluate_smt(model, dx, dy, cfg.decode_threads)
                                           : trainer::evaluate_smt(model, dy, dx, cfg.decode_threads);
          out << fmt::format("SMT0\t{}\t{:.2f}\n", direction_name(d), b);
        }
      }
    } else if (run_em->parsed()) {
      auto corp = corpora(c, cfg);
      auto state = trainer::run_em(corp, cfg, c.out_dir());
      out << trainer::format_report(state.history);
    } else if (translate->parsed()) {
      Direction d = parse_direction(direction);
      auto vs = load_vocab(src_vocab.empty() ? data / fmt::format("vocab.{}.txt", side(d, false)) : fs::path(src_vocab));
      auto vt = load_vocab(tgt_vocab.empty() ? data / fmt::format("vocab.{}.txt", side(d, true)) : fs::path(tgt_vocab));
      std::function<Tokens(const Sentence&)> run;
      std::optional<nmt::NMTModel> nmt_model;
      std::optional<smt::SMTModel> smt_model;
      if (is_checkpoint(model_path)) {
        nmt_model.emplace(nmt::NMTModel::load(model_path, vs, vt));
        run = [&](const Sentence& s) {
          return vt->decode(beam > 1 ? nmt_model->beam(s, beam, cfg.max_decode_len)
                                     : nmt_model->greedy(s, cfg.max_decode_len));
        };
      } else {
        auto table = std::make_shared<const smt::PhraseTable>(smt::PhraseTable::load(model_path, vs, vt));
        auto lm = std::make_shared<const NGramLM>(NGramLM::load_arpa(
            need(lm_path.empty() ? data / fmt::format("lm.{}.arpa", side(d, true)) : fs::path(lm_path)), vt));
        smt::LogLinearWeights w = trainer::smt_weights(cfg);
        if (!weights_path.empty()) w = smt::LogLinearWeights::load(weights_path);
        else if (fs::exists(data / "weights.txt")) w = smt::LogLinearWeights::load(data / "weights.txt");
        smt_model = smt::make_smt(table, lm, w, cfg.decoder);
      }
      std::string line;
      while (std::getline(in, line)) {
        Tokens toks = tokenize(line);
        Tokens res;
        if (!toks.empty() && smt_model) {
          // Passed-through words keep their spelling, unknown or not.
          auto t = smt::decode(*smt_model, vs->encode(toks));
          for (const auto& st : t.derivation) {
            if (st.passthrough) res.push_back(toks[static_cast<std::size_t>(st.src_begin)]);
            else for (WordId w : st.target) res.push_back(vt->token(w));
          }
        } else if (!toks.empty()) {
          res = run(vs->encode(toks));
        }
        std::string joined;
        for (std::size_t i = 0; i < res.size(); ++i) joined += (i ? " " : "") + res[i];
        out << joined << '\n';
      }
    } else if (evaluate->parsed()) {
      auto hyp = read_lines(hyp_path);
      auto ref = read_lines(ref_path);
      out << bleu_line(harness::bleu(hyp, ref)) << '\n';
      if (by_length) {
        auto buckets = harness::default_buckets();
        auto reports = harness::bleu_by_length(hyp, ref, buckets);
        for (std::size_t i = 0; i < buckets.size(); ++i) {
          std::string range = buckets[i].hi < 0 ? fmt::format("({},inf)", buckets[i].lo)
                                                : fmt::format("({},{}]", buckets[i].lo, buckets[i].hi);
          out << range << '\t' << (reports[i] ? bleu_line(*reports[i]) : std::string("empty")) << '\n';
        }
      }
    } else if (sweep->parsed()) {
      auto corp = corpora(c, cfg);
      auto init = trainer::initialize(corp, cfg);
      auto result = harness::sweep_init(param, grid, cfg, corp, init);
      std::string text = harness::format_sweep(result);
      std::ofstream(c.out_dir() / fmt::format("sweep.{}.tsv", param), std::ios::binary) << text;
      out << text;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace unmt::cli
