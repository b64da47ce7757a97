// carekit command line: train, generate, evaluate, analyze, verify.

#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "carekit/harness/checkpoint.hpp"
#include "carekit/harness/config.hpp"
#include "carekit/harness/decode.hpp"
#include "carekit/harness/evaluate.hpp"
#include "carekit/harness/suites.hpp"
#include "carekit/harness/trainer.hpp"
#include "carekit/metrics/metrics.hpp"

namespace fs = std::filesystem;
using namespace carekit;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kRuntime = 2, kViolation = 3 };

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

RunConfig load_config(const Globals& g) {
  RunConfig c = g.config.empty() ? RunConfig{} : RunConfig::load(g.config);
  if (g.seed) c.seed = g.seed;
  if (!g.out_dir.empty()) c.out_dir = g.out_dir;
  return c;
}

std::string out_dir_or(const Globals& g, const std::string& fallback) {
  return g.out_dir.empty() ? fallback : g.out_dir;
}

// --- generate ---------------------------------------------------------------

struct GenerateArgs {
  std::string checkpoint;
  std::string input;
  std::string output;
  std::optional<std::string> strategy;
  std::optional<int> beam_width, top_k, max_new_tokens;
  std::optional<double> top_p, temperature;
  bool ids = false;
};

template <typename Scalar>
int generate_typed(const Checkpoint& ckpt, const Globals& g, const GenerateArgs& a) {
  DecodeConfig d = ckpt.config.decode;
  if (a.strategy) {
    if (*a.strategy == "beam") {
      d.strategy = DecodeStrategy::beam;
    } else if (*a.strategy == "sample") {
      d.strategy = DecodeStrategy::sample;
    } else {
      throw ConfigError("--strategy must be beam or sample");
    }
  }
  if (a.beam_width) d.beam_width = *a.beam_width;
  if (a.top_k) d.top_k = *a.top_k;
  if (a.top_p) d.top_p = *a.top_p;
  if (a.temperature) d.temperature = *a.temperature;
  if (a.max_new_tokens) d.max_new_tokens = *a.max_new_tokens;
  d.validate();

  const auto model = model_from_checkpoint<Scalar>(ckpt);
  const Tokenizer& tok = ckpt.tokenizer;
  TransformerNextToken<Scalar> lm(model, tok.eot());
  CounterRng rng(g.seed.value_or(ckpt.config.require_seed()));

  std::vector<std::string> prompts = a.input.empty() ? std::vector<std::string>{""} : read_lines(a.input);
  std::string out;
  for (const auto& line : prompts) {
    const std::string cond = line.substr(0, line.find('\t'));
    const TokenSequence context = tok.encode(cond);
    TokenSequence gen;
    if (d.strategy == DecodeStrategy::beam) {
      gen = generate_beam(lm, context, tok.eot(), d.beam_width, d.max_new_tokens);
    } else {
      gen = generate_sample(lm, context, tok.eot(),
                            {d.top_k, d.top_p, d.temperature, d.max_new_tokens, false}, rng);
    }
    if (a.ids) {
      for (std::size_t i = 0; i < gen.size(); ++i) out += (i ? " " : "") + std::to_string(gen[i]);
    } else {
      std::string text = tok.decode(gen);
      for (auto& c : text) {
        if (c == '\n' || c == '\t') c = ' ';
      }
      out += text;
    }
    out += "\n";
  }
  const std::string path =
      a.output.empty() ? (fs::path(out_dir_or(g, ckpt.config.out_dir)) / "generated.txt").string() : a.output;
  write_file_atomic(path, out);
  spdlog::info("wrote {} line(s) to {}", prompts.size(), path);
  return kOk;
}

// --- analyze ----------------------------------------------------------------

template <typename Scalar>
int analyze_typed(const Checkpoint& ckpt, const Globals& g, const std::string& corpus_path) {
  const auto model = model_from_checkpoint<Scalar>(ckpt);
  const std::string path = corpus_path.empty() ? ckpt.config.corpus_path : corpus_path;
  auto corpus = load_corpus(path, ckpt.config.corpus_mode, ckpt.tokenizer,
                            static_cast<std::size_t>(ckpt.config.model.max_seq_len));
  const auto result = analyze_model(model, std::span<const TokenSample>(corpus.samples), ckpt.tokenizer.eot());
  const std::string dir = (fs::path(out_dir_or(g, ckpt.config.out_dir)) / "analysis").string();
  write_analysis(result, dir);
  if (result.regression) {
    std::cout << "norm-frequency regression: slope " << result.regression->slope << ", R^2 "
              << result.regression->r_squared << " over " << result.regression->n_points << " tokens\n";
  }
  if (result.gap) std::cout << "cosine gap (high - low): " << result.gap->gap << "\n";
  for (const auto& note : result.notes) std::cout << "skipped " << note << "\n";
  std::cout << "wrote " << dir << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"carekit: attention-concentration training laboratory"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "run configuration (INI)");
  app.add_option("--seed", g.seed, "seed; overrides [train] seed");
  app.add_option("--out-dir", g.out_dir, "output directory; overrides [output] dir");
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  auto* train = app.add_subcommand("train", "train a model");
  std::optional<std::string> resume;
  std::optional<long> max_steps;
  train->add_option("--resume", resume, "continue from a checkpoint");
  train->add_option("--max-steps", max_steps, "override [train] max_steps");

  auto* generate = app.add_subcommand("generate", "decode continuations from a checkpoint");
  GenerateArgs ga;
  generate->add_option("--checkpoint", ga.checkpoint, "checkpoint file")->required();
  generate->add_option("--input", ga.input, "one condition per line (text before a TAB)");
  generate->add_option("--output", ga.output, "output file (default <out-dir>/generated.txt)");
  generate->add_option("--strategy", ga.strategy, "beam or sample");
  generate->add_option("--beam-width", ga.beam_width);
  generate->add_option("--top-k", ga.top_k);
  generate->add_option("--top-p", ga.top_p);
  generate->add_option("--temperature", ga.temperature);
  generate->add_option("--max-new-tokens", ga.max_new_tokens);
  generate->add_flag("--ids", ga.ids, "write token ids instead of text");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "diversity and overlap metrics");
  std::string gen_path, tokenizer_path, format = "text", metric_list = "dist,self_bleu,js,rep,cnd,bleu";
  std::optional<std::string> ref_path;
  evaluate_cmd->add_option("--generated", gen_path, "generated corpus")->required();
  evaluate_cmd->add_option("--reference", ref_path, "reference corpus");
  evaluate_cmd->add_option("--tokenizer", tokenizer_path, "tokenizer.txt or checkpoint for text input");
  evaluate_cmd->add_option("--format", format, "text or ids")->check(CLI::IsMember({"text", "ids"}));
  evaluate_cmd->add_option("--metrics", metric_list, "comma-separated metric names (may be empty)");

  auto* analyze = app.add_subcommand("analyze", "frequency diagnostics of a trained model");
  std::string analyze_ckpt, analyze_corpus;
  analyze->add_option("--checkpoint", analyze_ckpt, "checkpoint file")->required();
  analyze->add_option("--corpus", analyze_corpus, "corpus (default: the run's corpus)");

  auto* verify = app.add_subcommand("verify", "run every inequality and oracle check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*train) {
      RunConfig cfg = load_config(g);
      if (max_steps) cfg.train.max_steps = *max_steps;
      if (!resume && g.config.empty()) throw ConfigError("train needs --config");
      run_training(cfg, resume);
      return kOk;
    }
    if (*generate) {
      const Checkpoint ckpt = checkpoint_load(ga.checkpoint);
      return ckpt.config.train.precision == Precision::f32 ? generate_typed<float>(ckpt, g, ga)
                                                           : generate_typed<double>(ckpt, g, ga);
    }
    if (*evaluate_cmd) {
      EvaluateInput in;
      in.generated_path = gen_path;
      in.reference_path = ref_path;
      for (std::size_t start = 0; start < metric_list.size();) {
        const auto comma = metric_list.find(',', start);
        const auto name = metric_list.substr(start, comma - start);
        if (!name.empty()) in.metrics.push_back(name);
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      if (format == "text") {
        if (tokenizer_path.empty()) {
          in.tokenizer = Tokenizer();
        } else if (fs::path(tokenizer_path).extension() == ".ckpt") {
          in.tokenizer = checkpoint_load(tokenizer_path).tokenizer;
        } else {
          in.tokenizer = Tokenizer::deserialize(read_file(tokenizer_path));
        }
      }
      const auto reports = evaluate(in);
      std::string hash;
      if (!g.config.empty()) {
        hash = load_config(g).hash();
      } else {
        hash = hex64(fnv1a64(format + "|" + metric_list + "|" +
                             (in.tokenizer ? in.tokenizer->serialize() : std::string())));
      }
      const fs::path dir(out_dir_or(g, "."));
      write_file_atomic((dir / "report.csv").string(), reports_to_csv(reports));
      write_file_atomic((dir / "report.json").string(), reports_to_json(reports, hash));
      std::cout << reports_to_csv(reports);
      return kOk;
    }
    if (*analyze) {
      const Checkpoint ckpt = checkpoint_load(analyze_ckpt);
      return ckpt.config.train.precision == Precision::f32 ? analyze_typed<float>(ckpt, g, analyze_corpus)
                                                           : analyze_typed<double>(ckpt, g, analyze_corpus);
    }
    if (*verify) {
      const auto reports = run_verify_suite(g.seed.value_or(1));
      bool ok = true;
      for (const auto& r : reports) {
        ok = ok && r.passed();
        std::cout << (r.passed() ? "PASS " : "FAIL ") << r.name << ": " << r.checks << " checks, "
                  << r.violations << " violations, min slack " << r.min_slack;
        if (!r.passed()) std::cout << " (worst: " << r.worst.check << ")";
        std::cout << "\n";
      }
      const fs::path dir(out_dir_or(g, "."));
      write_file_atomic((dir / "verify.json").string(), verifier_reports_json(reports));
      return ok ? kOk : kViolation;
    }
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const ContractError& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kRuntime;
  }
  return kUsage;
}
