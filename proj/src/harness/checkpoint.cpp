#include "carekit/harness/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <sstream>

namespace carekit {

namespace {

constexpr std::string_view kMagic = "carekit-checkpoint";
constexpr std::string_view kEndHeader = "end_header\n";

void put_le(std::string& out, std::uint64_t bits, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(const char* p, int bytes) {
  std::uint64_t bits = 0;
  for (int i = 0; i < bytes; ++i) bits |= std::uint64_t(static_cast<unsigned char>(p[i])) << (8 * i);
  return bits;
}

int dtype_size(std::string_view dtype) {
  if (dtype == "f32") return 4;
  if (dtype == "f64") return 8;
  throw CheckpointError("unknown dtype '" + std::string(dtype) + "'");
}

void encode_array(std::string& payload, const NamedArray& a, std::string_view dtype) {
  for (double v : a.values) {
    if (dtype == "f32") {
      put_le(payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
    } else {
      put_le(payload, std::bit_cast<std::uint64_t>(v), 8);
    }
  }
}

// Cursor over the header text.
class HeaderReader {
 public:
  explicit HeaderReader(std::string_view text) : text_(text) {}

  std::string line() {
    const auto nl = text_.find('\n', pos_);
    if (nl == std::string_view::npos) throw TruncatedCheckpointError("checkpoint header is truncated");
    std::string out(text_.substr(pos_, nl - pos_));
    pos_ = nl + 1;
    return out;
  }

  std::istringstream fields(std::string_view expected_key) {
    std::istringstream is(line());
    std::string key;
    is >> key;
    if (key != expected_key) {
      throw CheckpointError("checkpoint header: expected '" + std::string(expected_key) + "', got '" +
                            key + "'");
    }
    return is;
  }

  std::string blob(std::string_view key) {
    auto is = fields(key);
    std::size_t n = 0;
    if (!(is >> n)) throw CheckpointError("checkpoint header: bad length for " + std::string(key));
    if (pos_ + n > text_.size()) throw TruncatedCheckpointError("checkpoint header is truncated");
    std::string out(text_.substr(pos_, n));
    pos_ += n;
    return out;
  }

  std::size_t pos() const { return pos_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

template <typename T>
T read_field(std::istringstream& is, std::string_view what) {
  T v{};
  if (!(is >> v)) throw CheckpointError("checkpoint header: bad value for " + std::string(what));
  return v;
}

struct ArrayEntry {
  std::string group;  // param, adam_m, adam_v
  std::string name;
  std::string dtype;
  Shape shape;
  std::size_t offset = 0;
  std::size_t bytes = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const std::string dtype(to_string(ckpt.config.train.precision));
  const int width = dtype_size(dtype);
  std::string payload;
  std::ostringstream table;
  std::size_t count = 0;
  auto add_group = [&](std::string_view group, const std::vector<NamedArray>& arrays) {
    for (const auto& a : arrays) {
      if (static_cast<Index>(a.values.size()) != shape_size(a.shape)) {
        throw ContractError("array " + a.name + " has " + std::to_string(a.values.size()) +
                            " values for shape " + shape_string(a.shape));
      }
      table << "array " << group << ' ' << a.name << ' ' << dtype << ' ' << a.shape.size();
      for (Index d : a.shape) table << ' ' << d;
      table << ' ' << payload.size() << ' ' << a.values.size() * width << '\n';
      encode_array(payload, a, dtype);
      ++count;
    }
  };
  add_group("param", ckpt.parameters);
  add_group("adam_m", ckpt.adam_m);
  add_group("adam_v", ckpt.adam_v);

  const std::string config = ckpt.config.to_ini();
  const std::string vocab = ckpt.tokenizer.serialize();
  std::ostringstream os;
  os << kMagic << ' ' << ckpt.version << '\n'
     << "config " << config.size() << '\n' << config
     << "tokenizer " << vocab.size() << '\n' << vocab
     << "step " << ckpt.step << '\n'
     << "adam_step " << ckpt.adam_step << '\n'
     << "data_rng " << ckpt.data_rng.seed << ' ' << ckpt.data_rng.counter << '\n'
     << "dropout_rng " << ckpt.dropout_rng.seed << ' ' << ckpt.dropout_rng.counter << '\n'
     << "arrays " << count << '\n' << table.str()
     << "payload " << payload.size() << ' ' << hex64(fnv1a64(payload)) << '\n'
     << kEndHeader;
  return os.str() + payload;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  const auto end = bytes.find(kEndHeader);
  if (end == std::string_view::npos) {
    if (bytes.substr(0, kMagic.size()) != kMagic) throw CheckpointError("not a checkpoint file");
    throw TruncatedCheckpointError("checkpoint header is truncated");
  }
  HeaderReader h(bytes);
  Checkpoint ckpt;
  {
    auto is = h.fields(kMagic);
    ckpt.version = read_field<int>(is, "version");
    if (ckpt.version != Checkpoint::kVersion) {
      throw CheckpointVersionError("checkpoint format version " + std::to_string(ckpt.version) +
                                   " is not supported (expected " +
                                   std::to_string(Checkpoint::kVersion) + ")");
    }
  }
  ckpt.config = RunConfig::from_ini(h.blob("config"));
  ckpt.tokenizer = Tokenizer::deserialize(h.blob("tokenizer"));
  {
    auto is = h.fields("step");
    ckpt.step = read_field<long>(is, "step");
  }
  {
    auto is = h.fields("adam_step");
    ckpt.adam_step = read_field<long>(is, "adam_step");
  }
  for (auto* rng : {&ckpt.data_rng, &ckpt.dropout_rng}) {
    auto is = h.fields(rng == &ckpt.data_rng ? "data_rng" : "dropout_rng");
    rng->seed = read_field<std::uint64_t>(is, "rng seed");
    rng->counter = read_field<std::uint64_t>(is, "rng counter");
  }
  std::vector<ArrayEntry> entries;
  {
    auto is = h.fields("arrays");
    const auto n = read_field<std::size_t>(is, "array count");
    for (std::size_t i = 0; i < n; ++i) {
      auto row = h.fields("array");
      ArrayEntry e;
      e.group = read_field<std::string>(row, "group");
      e.name = read_field<std::string>(row, "name");
      e.dtype = read_field<std::string>(row, "dtype");
      const auto rank = read_field<std::size_t>(row, "rank");
      for (std::size_t k = 0; k < rank; ++k) e.shape.push_back(read_field<Index>(row, "dim"));
      e.offset = read_field<std::size_t>(row, "offset");
      e.bytes = read_field<std::size_t>(row, "bytes");
      if (e.bytes != static_cast<std::size_t>(shape_size(e.shape)) * dtype_size(e.dtype)) {
        throw CheckpointError("array " + e.name + ": byte count disagrees with shape");
      }
      entries.push_back(std::move(e));
    }
  }
  std::size_t payload_size = 0;
  std::string checksum;
  {
    auto is = h.fields("payload");
    payload_size = read_field<std::size_t>(is, "payload size");
    checksum = read_field<std::string>(is, "checksum");
  }
  if (h.line() != "end_header") throw CheckpointError("checkpoint header: missing end marker");

  const std::string_view payload = bytes.substr(h.pos());
  if (payload.size() < payload_size) {
    throw TruncatedCheckpointError("checkpoint is truncated: payload has " +
                                   std::to_string(payload.size()) + " of " +
                                   std::to_string(payload_size) + " bytes");
  }
  if (payload.size() > payload_size) {
    throw TruncatedCheckpointError("checkpoint has " + std::to_string(payload.size() - payload_size) +
                                   " unexpected trailing bytes");
  }
  if (hex64(fnv1a64(payload)) != checksum) throw CheckpointError("checkpoint payload checksum mismatch");

  for (const auto& e : entries) {
    if (e.offset + e.bytes > payload.size()) throw CheckpointError("array " + e.name + " outside payload");
    NamedArray a{e.name, e.shape, {}};
    const int width = dtype_size(e.dtype);
    a.values.reserve(e.bytes / width);
    for (std::size_t off = e.offset; off < e.offset + e.bytes; off += width) {
      const std::uint64_t bits = get_le(payload.data() + off, width);
      a.values.push_back(width == 4 ? double(std::bit_cast<float>(static_cast<std::uint32_t>(bits)))
                                    : std::bit_cast<double>(bits));
    }
    if (e.group == "param") {
      ckpt.parameters.push_back(std::move(a));
    } else if (e.group == "adam_m") {
      ckpt.adam_m.push_back(std::move(a));
    } else if (e.group == "adam_v") {
      ckpt.adam_v.push_back(std::move(a));
    } else {
      throw CheckpointError("unknown array group '" + e.group + "'");
    }
  }
  return ckpt;
}

void checkpoint_save(const Checkpoint& ckpt, const std::string& path) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint checkpoint_load(const std::string& path) { return parse_checkpoint(read_file(path)); }

template <typename Scalar>
std::vector<NamedArray> export_parameters(const Transformer<Scalar>& model) {
  std::vector<NamedArray> out;
  for (const auto& p : model.parameters()) {
    const auto& m = p.tensor->data();
    out.push_back({p.name, p.tensor->shape(), std::vector<double>(m.data(), m.data() + m.size())});
  }
  return out;
}

namespace {

template <typename Scalar>
void check_arrays(const Transformer<Scalar>& model, const std::vector<NamedArray>& arrays,
                  std::string_view what) {
  const auto& params = model.parameters();
  if (arrays.size() != params.size()) {
    throw CheckpointShapeError(std::string(what) + ": checkpoint holds " + std::to_string(arrays.size()) +
                               " arrays, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (arrays[i].name != params[i].name) {
      throw CheckpointShapeError(std::string(what) + ": expected array '" + params[i].name + "', found '" +
                                 arrays[i].name + "'");
    }
    if (arrays[i].shape != params[i].tensor->shape()) {
      throw CheckpointShapeError(std::string(what) + ": shape mismatch for '" + params[i].name +
                                 "': stored " + shape_string(arrays[i].shape) + ", config implies " +
                                 shape_string(params[i].tensor->shape()));
    }
  }
}

template <typename Scalar>
Matrix<Scalar> to_matrix(const NamedArray& a, Index rows, Index cols) {
  Matrix<Scalar> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(a.values[static_cast<std::size_t>(i)]);
  return m;
}

}  // namespace

template <typename Scalar>
void import_parameters(Transformer<Scalar>& model, const std::vector<NamedArray>& arrays) {
  check_arrays(model, arrays, "parameters");
  const auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = *params[i].tensor;
    t.data() = to_matrix<Scalar>(arrays[i], t.rows(), t.cols());
  }
}

template <typename Scalar>
std::vector<NamedArray> export_adam(const Transformer<Scalar>& model,
                                    const std::vector<Matrix<Scalar>>& moments) {
  std::vector<NamedArray> out;
  if (moments.empty()) return out;
  const auto& params = model.parameters();
  if (moments.size() != params.size()) throw ContractError("optimizer state does not match model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& m = moments[i];
    out.push_back({params[i].name, params[i].tensor->shape(),
                   std::vector<double>(m.data(), m.data() + m.size())});
  }
  return out;
}

template <typename Scalar>
std::vector<Matrix<Scalar>> import_adam(const Transformer<Scalar>& model,
                                        const std::vector<NamedArray>& arrays) {
  std::vector<Matrix<Scalar>> out;
  if (arrays.empty()) return out;
  check_arrays(model, arrays, "optimizer state");
  const auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back(to_matrix<Scalar>(arrays[i], params[i].tensor->rows(), params[i].tensor->cols()));
  }
  return out;
}

template <typename Scalar>
Transformer<Scalar> model_from_checkpoint(const Checkpoint& ckpt) {
  CounterRng unused(0);
  Transformer<Scalar> model(ckpt.config.model, unused);
  import_parameters(model, ckpt.parameters);
  return model;
}

#define CAREKIT_INSTANTIATE(S)                                                                     \
  template std::vector<NamedArray> export_parameters<S>(const Transformer<S>&);                    \
  template void import_parameters<S>(Transformer<S>&, const std::vector<NamedArray>&);             \
  template std::vector<NamedArray> export_adam<S>(const Transformer<S>&,                           \
                                                  const std::vector<Matrix<S>>&);                   \
  template std::vector<Matrix<S>> import_adam<S>(const Transformer<S>&,                            \
                                                 const std::vector<NamedArray>&);                  \
  template Transformer<S> model_from_checkpoint<S>(const Checkpoint&);

CAREKIT_INSTANTIATE(float)
CAREKIT_INSTANTIATE(double)
#undef CAREKIT_INSTANTIATE

}  // namespace carekit
