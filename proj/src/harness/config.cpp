#include "carekit/harness/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <spdlog/spdlog.h>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "carekit/numkit/errors.hpp"

namespace carekit {

namespace pt = boost::property_tree;

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last) {
    throw ConfigError("key '" + key + "': cannot parse '" + text + "' as a number");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + text + "'");
}

// Flat view of the INI tree keyed by "section.key", with use tracking so
// unknown keys are reported instead of silently ignored.
class Entries {
 public:
  explicit Entries(const pt::ptree& tree) {
    for (const auto& [section, body] : tree) {
      if (body.empty()) throw ConfigError("key '" + section + "' appears outside a section");
      for (const auto& [key, value] : body) values_[section + "." + key] = value.data();
    }
  }

  const std::string* get(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }

  template <typename T>
  void number(const std::string& key, T& out) {
    if (auto* v = get(key)) out = parse_number<T>(key, *v);
  }
  void text(const std::string& key, std::string& out) {
    if (auto* v = get(key)) out = *v;
  }
  void flag(const std::string& key, bool& out) {
    if (auto* v = get(key)) out = parse_bool(key, *v);
  }

  void reject_unknown() const {
    for (const auto& [key, value] : values_) {
      if (!used_.count(key)) throw ConfigError("unknown config key '" + key + "'");
    }
  }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

DecodeStrategy parse_strategy(std::string_view s) {
  if (s == "beam") return DecodeStrategy::beam;
  if (s == "sample") return DecodeStrategy::sample;
  throw ConfigError("unknown decode strategy '" + std::string(s) + "'");
}

Precision parse_precision(std::string_view s) {
  if (s == "f32" || s == "float") return Precision::f32;
  if (s == "f64" || s == "double") return Precision::f64;
  throw ConfigError("unknown precision '" + std::string(s) + "'");
}

TokenizerKind parse_tokenizer(std::string_view s) {
  if (s == "bpe") return TokenizerKind::bpe;
  if (s == "byte") return TokenizerKind::byte;
  throw ConfigError("unknown tokenizer kind '" + std::string(s) + "'");
}

}  // namespace

std::string_view to_string(DecodeStrategy s) { return s == DecodeStrategy::beam ? "beam" : "sample"; }
std::string_view to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }
std::string_view to_string(TokenizerKind k) { return k == TokenizerKind::bpe ? "bpe" : "byte"; }

void DecodeConfig::validate() const {
  if (beam_width < 1) throw ConfigError("beam_width must be >= 1");
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must lie in (0, 1]");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
}

std::uint64_t RunConfig::require_seed() const {
  if (!seed) throw ConfigError("seed is mandatory: set [train] seed or pass --seed");
  return *seed;
}

void RunConfig::validate() const {
  model.validate();
  care.validate();
  dropout.validate();
  decode.validate();
  check_variant_dropout(care.variant, dropout.mode);
  if (care.variant == Variant::pattern && !model.window) {
    throw ConfigError("variant pattern needs [model] window");
  }
  if (!(train.lr > 0)) throw ConfigError("lr must be positive");
  if (!(train.adam_beta1 >= 0 && train.adam_beta1 < 1) ||
      !(train.adam_beta2 >= 0 && train.adam_beta2 < 1)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(train.adam_eps > 0)) throw ConfigError("adam_eps must be positive");
  if (train.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (train.max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (train.log_interval < 1) throw ConfigError("log_interval must be >= 1");
  if (train.checkpoint_interval < 0) throw ConfigError("checkpoint_interval must be >= 0");
  require_seed();
}

void RunConfig::warn_ranges() const {
  for (const auto& note : care.range_warnings()) spdlog::warn("{}", note);
  if (train.lr < 5e-5 || train.lr > 5e-3) {
    spdlog::warn("lr={} outside tuned range [5e-05, 0.005]", train.lr);
  }
}

std::string RunConfig::to_ini() const {
  std::ostringstream os;
  os << "[model]\n"
     << "layers = " << model.n_layers << "\n"
     << "heads = " << model.n_heads << "\n"
     << "d_model = " << model.d_model << "\n"
     << "vocab_size = " << model.vocab_size << "\n"
     << "max_seq_len = " << model.max_seq_len << "\n"
     << "window = " << (model.window ? std::to_string(*model.window) : std::string("none")) << "\n"
     << "tie_embeddings = " << (model.tie_embeddings ? "true" : "false") << "\n\n";
  os << "[care]\n"
     << "variant = " << to_string(care.variant) << "\n"
     << "alpha = " << fmt_double(care.alpha) << "\n"
     << "gamma = " << fmt_double(care.gamma) << "\n"
     << "delta = " << fmt_double(care.delta) << "\n"
     << "freeze_steps = " << care.freeze_steps << "\n"
     << "warmup_steps = " << care.warmup_steps << "\n\n";
  os << "[dropout]\n"
     << "mode = " << to_string(dropout.mode) << "\n"
     << "p = " << fmt_double(dropout.p) << "\n"
     << "tau = " << fmt_double(dropout.tau) << "\n"
     << "mask_constant = " << fmt_double(dropout.mask_constant) << "\n\n";
  os << "[train]\n";
  if (seed) os << "seed = " << *seed << "\n";
  os << "lr = " << fmt_double(train.lr) << "\n"
     << "adam_beta1 = " << fmt_double(train.adam_beta1) << "\n"
     << "adam_beta2 = " << fmt_double(train.adam_beta2) << "\n"
     << "adam_eps = " << fmt_double(train.adam_eps) << "\n"
     << "batch_size = " << train.batch_size << "\n"
     << "max_steps = " << train.max_steps << "\n"
     << "log_interval = " << train.log_interval << "\n"
     << "checkpoint_interval = " << train.checkpoint_interval << "\n"
     << "precision = " << to_string(train.precision) << "\n\n";
  os << "[data]\n"
     << "corpus = " << corpus_path << "\n"
     << "mode = " << to_string(corpus_mode) << "\n"
     << "tokenizer = " << to_string(tokenizer) << "\n\n";
  os << "[decode]\n"
     << "strategy = " << to_string(decode.strategy) << "\n"
     << "beam_width = " << decode.beam_width << "\n"
     << "top_k = " << decode.top_k << "\n"
     << "top_p = " << fmt_double(decode.top_p) << "\n"
     << "temperature = " << fmt_double(decode.temperature) << "\n"
     << "max_new_tokens = " << decode.max_new_tokens << "\n\n";
  os << "[output]\n"
     << "dir = " << out_dir << "\n";
  return os.str();
}

RunConfig RunConfig::from_ini(std::string_view text) {
  pt::ptree tree;
  try {
    std::istringstream is{std::string(text)};
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  Entries e(tree);
  RunConfig c;
  std::string s;

  e.number("model.layers", c.model.n_layers);
  e.number("model.heads", c.model.n_heads);
  e.number("model.d_model", c.model.d_model);
  e.number("model.vocab_size", c.model.vocab_size);
  e.number("model.max_seq_len", c.model.max_seq_len);
  if (auto* w = e.get("model.window")) {
    if (*w == "none" || w->empty()) {
      c.model.window.reset();
    } else {
      c.model.window = parse_number<int>("model.window", *w);
    }
  }
  e.flag("model.tie_embeddings", c.model.tie_embeddings);

  if (auto* v = e.get("care.variant")) c.care.variant = parse_variant(*v);
  e.number("care.alpha", c.care.alpha);
  e.number("care.gamma", c.care.gamma);
  e.number("care.delta", c.care.delta);
  e.number("care.freeze_steps", c.care.freeze_steps);
  e.number("care.warmup_steps", c.care.warmup_steps);

  if (auto* v = e.get("dropout.mode")) c.dropout.mode = parse_dropout_mode(*v);
  e.number("dropout.p", c.dropout.p);
  e.number("dropout.tau", c.dropout.tau);
  e.number("dropout.mask_constant", c.dropout.mask_constant);

  if (auto* v = e.get("train.seed")) c.seed = parse_number<std::uint64_t>("train.seed", *v);
  e.number("train.lr", c.train.lr);
  e.number("train.adam_beta1", c.train.adam_beta1);
  e.number("train.adam_beta2", c.train.adam_beta2);
  e.number("train.adam_eps", c.train.adam_eps);
  e.number("train.batch_size", c.train.batch_size);
  e.number("train.max_steps", c.train.max_steps);
  e.number("train.log_interval", c.train.log_interval);
  e.number("train.checkpoint_interval", c.train.checkpoint_interval);
  if (auto* v = e.get("train.precision")) c.train.precision = parse_precision(*v);

  e.text("data.corpus", c.corpus_path);
  if (auto* v = e.get("data.mode")) c.corpus_mode = parse_corpus_mode(*v);
  if (auto* v = e.get("data.tokenizer")) c.tokenizer = parse_tokenizer(*v);

  if (auto* v = e.get("decode.strategy")) c.decode.strategy = parse_strategy(*v);
  e.number("decode.beam_width", c.decode.beam_width);
  e.number("decode.top_k", c.decode.top_k);
  e.number("decode.top_p", c.decode.top_p);
  e.number("decode.temperature", c.decode.temperature);
  e.number("decode.max_new_tokens", c.decode.max_new_tokens);

  e.text("output.dir", c.out_dir);
  e.reject_unknown();
  return c;
}

RunConfig RunConfig::load(const std::string& path) { return from_ini(read_file(path)); }

std::string RunConfig::hash() const { return hex64(fnv1a64(to_ini())); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw IoError("read error on '" + path + "'");
  return os.str();
}

void write_file_atomic(const std::string& path, std::string_view contents) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write error on '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) throw IoError("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace carekit
