#include "splab/harness/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "splab/errors.hpp"

namespace splab {

using json = nlohmann::json;

namespace {

constexpr char kMagic[4] = {'S', 'P', 'L', 'C'};

template <class U>
U to_little(U x) {
  if constexpr (std::endian::native == std::endian::little) {
    return x;
  } else {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) out |= ((x >> (8 * i)) & 0xFF) << (8 * (sizeof(U) - 1 - i));
    return out;
  }
}

class Writer {
 public:
  template <class U>
  void put(U x) {
    const U le = to_little(x);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&le);
    bytes.insert(bytes.end(), p, p + sizeof(U));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
  void put_doubles(const double* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) put(std::bit_cast<std::uint64_t>(data[i]));
  }

  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void need(std::size_t n, const std::string& section) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("truncated " + section + ": needs " + std::to_string(n) + " bytes at offset " +
                        std::to_string(pos_) + ", file has " + std::to_string(bytes_.size() - pos_) + " left");
    }
  }

  template <class U>
  U get(const std::string& section) {
    need(sizeof(U), section);
    U x;
    std::memcpy(&x, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return to_little(x);
  }

  std::string get_text(std::size_t n, const std::string& section) {
    need(n, section);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void get_doubles(double* out, std::size_t n, const std::string& section) {
    if (n > (bytes_.size() - pos_) / 8) need(n * 8, section);
    for (std::size_t i = 0; i < n; ++i) out[i] = std::bit_cast<double>(get<std::uint64_t>(section));
  }

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void write_preamble(Writer& w, const json& header) {
  const std::string text = header.dump();
  w.put_bytes(kMagic, 4);
  w.put<std::uint16_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.put_bytes(text.data(), text.size());
}

json read_preamble(Reader& r, const std::string& expected_content) {
  const std::string magic = r.get_text(4, "magic");
  if (magic != std::string(kMagic, 4)) throw UnsupportedFormat("not a splab checkpoint (bad magic at offset 0)");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kCheckpointVersion) {
    throw UnsupportedFormat("unsupported checkpoint version " + std::to_string(version) + " (this build reads " +
                            std::to_string(kCheckpointVersion) + ")");
  }
  const auto len = r.get<std::uint32_t>("header length");
  const std::size_t at = r.offset();
  const std::string text = r.get_text(len, "header");
  json h;
  try {
    h = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError("malformed header at offset " + std::to_string(at) + ": " + e.what());
  }
  const std::string content = h.value("content", "");
  if (content != expected_content) {
    throw FormatError("header at offset " + std::to_string(at) + " describes '" + content + "', expected '" +
                      expected_content + "'");
  }
  return h;
}

template <class T>
T field(const json& h, const char* key) {
  if (!h.contains(key)) throw FormatError(std::string("header is missing '") + key + "'");
  try {
    return h.at(key).get<T>();
  } catch (const json::exception&) {
    throw FormatError(std::string("header field '") + key + "' has the wrong type");
  }
}

std::string layer_kind(const Layer& l) {
  if (l.is_factored()) return "factored";
  if (l.gated()) return "gated";
  return "dense";
}

}  // namespace

std::string Checkpoint::kind() const {
  if (network.factored()) return "factored";
  if (network.gated()) return "gated";
  return "dense";
}

bool Checkpoint::identical_to(const Checkpoint& o) const {
  return env == o.env && algo == o.algo && sparsity == o.sparsity &&
         std::bit_cast<std::uint64_t>(lambda_c) == std::bit_cast<std::uint64_t>(o.lambda_c) && seed == o.seed &&
         episodes == o.episodes && network.identical_to(o.network);
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  const auto& net = ckpt.network;
  json h;
  h["content"] = "policy";
  h["env"] = ckpt.env;
  h["algo"] = to_string(ckpt.algo);
  h["kind"] = ckpt.kind();
  h["sparsity"] = to_string(ckpt.sparsity);
  h["lambda_c"] = ckpt.lambda_c;
  h["seed"] = ckpt.seed;
  h["episodes"] = ckpt.episodes;
  h["gate"] = {{"beta", net.gate_config().beta}, {"gamma", net.gate_config().gamma}, {"zeta", net.gate_config().zeta}};
  h["architecture"] = net.layer_sizes();
  json layers = json::array();
  for (const auto& l : net.layers()) {
    json j{{"in", l.in_dim()}, {"out", l.out_dim()}, {"activation", to_string(l.activation)}, {"kind", layer_kind(l)}};
    if (l.is_factored()) j["rank"] = l.factored->rank();
    layers.push_back(j);
  }
  h["layers"] = layers;

  Writer w;
  write_preamble(w, h);
  for (const auto& l : net.layers()) {
    if (l.is_factored()) {
      const auto& f = *l.factored;
      w.put_doubles(f.u.data(), static_cast<std::size_t>(f.u.size()));
      w.put_doubles(f.s.data(), static_cast<std::size_t>(f.s.size()));
      w.put_doubles(f.v.data(), static_cast<std::size_t>(f.v.size()));
      w.put_doubles(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
      continue;
    }
    w.put_doubles(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    w.put_doubles(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    if (l.gated()) w.put_doubles(l.log_alpha->data(), static_cast<std::size_t>(l.log_alpha->size()));
  }
  return std::move(w.bytes);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const json h = read_preamble(r, "policy");
  Checkpoint c;
  try {
    c.env = field<std::string>(h, "env");
    c.algo = algo_from_string(field<std::string>(h, "algo"));
    c.sparsity = regularizer_from_string(field<std::string>(h, "sparsity"));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("header: ") + e.what());
  }
  c.lambda_c = field<double>(h, "lambda_c");
  c.seed = field<std::uint64_t>(h, "seed");
  c.episodes = field<int>(h, "episodes");
  const json gate = field<json>(h, "gate");
  GateConfig gc{field<double>(gate, "beta"), field<double>(gate, "gamma"), field<double>(gate, "zeta")};

  const json layers = field<json>(h, "layers");
  if (!layers.is_array() || layers.empty()) throw FormatError("header lists no layers");
  std::vector<Layer> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const json& lj = layers[i];
    const std::string name = "layer " + std::to_string(i);
    const int in = field<int>(lj, "in");
    const int outd = field<int>(lj, "out");
    if (in < 1 || outd < 1) throw FormatError(name + ": non-positive width in header");
    const std::string kind = field<std::string>(lj, "kind");
    Layer l;
    try {
      l.activation = activation_from_string(field<std::string>(lj, "activation"));
    } catch (const Error& e) {
      throw FormatError(name + ": " + e.what());
    }
    l.bias.resize(outd);
    if (kind == "factored") {
      const int rank = field<int>(lj, "rank");
      if (rank < 1 || rank > std::min(in, outd)) throw FormatError(name + ": invalid rank in header");
      FactoredWeight f;
      f.u.resize(outd, rank);
      f.s.resize(rank);
      f.v.resize(in, rank);
      r.get_doubles(f.u.data(), static_cast<std::size_t>(f.u.size()), name + " U");
      r.get_doubles(f.s.data(), static_cast<std::size_t>(f.s.size()), name + " S");
      r.get_doubles(f.v.data(), static_cast<std::size_t>(f.v.size()), name + " V");
      r.get_doubles(l.bias.data(), static_cast<std::size_t>(outd), name + " bias");
      l.factored = std::move(f);
    } else if (kind == "dense" || kind == "gated") {
      l.weight.resize(outd, in);
      r.get_doubles(l.weight.data(), static_cast<std::size_t>(l.weight.size()), name + " weight");
      r.get_doubles(l.bias.data(), static_cast<std::size_t>(outd), name + " bias");
      if (kind == "gated") {
        Matrix la(outd, in);
        r.get_doubles(la.data(), static_cast<std::size_t>(la.size()), name + " log_alpha");
        l.log_alpha = std::move(la);
      }
    } else {
      throw FormatError(name + ": unknown layer kind '" + kind + "'");
    }
    out.push_back(std::move(l));
  }
  if (!r.done()) throw FormatError("trailing bytes after the last blob at offset " + std::to_string(r.offset()));
  try {
    c.network = Network(std::move(out), gc);
  } catch (const InvalidArchitecture& e) {
    throw FormatError(std::string("inconsistent architecture: ") + e.what());
  }
  return c;
}

std::vector<std::uint8_t> encode_demos(const DemoBuffer& demos) {
  const auto qd = demos.size() ? demos.query(0).size() : 0;
  const auto ad = demos.size() ? demos.action(0).size() : 0;
  json h{{"content", "demos"},
         {"capacity", demos.capacity()},
         {"count", demos.size()},
         {"query_dim", qd},
         {"action_dim", ad}};
  Writer w;
  write_preamble(w, h);
  for (std::size_t i = 0; i < demos.size(); ++i) {
    if (demos.query(i).size() != qd || demos.action(i).size() != ad) throw ShapeError("demo widths differ");
    w.put_doubles(demos.query(i).data(), static_cast<std::size_t>(qd));
    w.put_doubles(demos.action(i).data(), static_cast<std::size_t>(ad));
  }
  return std::move(w.bytes);
}

DemoBuffer decode_demos(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const json h = read_preamble(r, "demos");
  const auto capacity = field<std::size_t>(h, "capacity");
  const auto count = field<std::size_t>(h, "count");
  const auto qd = field<Eigen::Index>(h, "query_dim");
  const auto ad = field<Eigen::Index>(h, "action_dim");
  if (count > capacity || qd < 0 || ad < 0) throw FormatError("inconsistent demo header");
  DemoBuffer demos(capacity);
  for (std::size_t i = 0; i < count; ++i) {
    Vector q(qd), a(ad);
    r.get_doubles(q.data(), static_cast<std::size_t>(qd), "demo " + std::to_string(i) + " query");
    r.get_doubles(a.data(), static_cast<std::size_t>(ad), "demo " + std::to_string(i) + " action");
    demos.push(std::move(q), std::move(a));
  }
  if (!r.done()) throw FormatError("trailing bytes after the last demo at offset " + std::to_string(r.offset()));
  return demos;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("read failed for " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + tmp.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const UnsupportedFormat& e) {
    throw UnsupportedFormat(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_demos(const std::filesystem::path& path, const DemoBuffer& demos) { write_file(path, encode_demos(demos)); }

DemoBuffer load_demos(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_demos(bytes);
  } catch (const UnsupportedFormat& e) {
    throw UnsupportedFormat(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace splab
