#include "mol/io.hpp"

#include <yaml-cpp/yaml.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "mol/errors.hpp"

namespace mol {

namespace {

using Binder = std::function<void(const YAML::Node&)>;

int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

template <class T>
T scalar(const YAML::Node& n, const std::string& key, const char* what) {
  if (!n.IsScalar()) throw ConfigError("'" + key + "' must be " + what, line_of(n));
  try {
    return n.as<T>();
  } catch (const YAML::BadConversion&) {
    throw ConfigError("'" + key + "' must be " + what + ", got '" + n.Scalar() + "'", line_of(n));
  }
}

void bind_section(const YAML::Node& node, const std::string& section, const std::map<std::string, Binder>& fields) {
  if (!node.IsMap()) throw ConfigError("'" + section + "' must be a mapping", line_of(node));
  for (auto it = node.begin(); it != node.end(); ++it) {
    const std::string key = it->first.as<std::string>();
    auto f = fields.find(key);
    if (f == fields.end()) {
      const std::string where = section.empty() ? "" : " in '" + section + "'";
      throw ConfigError("unknown key '" + key + "'" + where, line_of(it->first));
    }
    f->second(it->second);
  }
}

template <class T>
Binder number(T& slot, const std::string& key, std::function<bool(T)> ok = nullptr, const char* range = "") {
  return [&slot, key, ok, range](const YAML::Node& n) {
    const T v = scalar<T>(n, key, "a number");
    if (ok && !ok(v)) throw ConfigError("'" + key + "' " + range, line_of(n));
    slot = v;
  };
}

Binder positive_int(int& slot, const std::string& key) {
  return number<int>(slot, key, [](int v) { return v >= 1; }, "must be >= 1");
}
Binder nonneg_int(int& slot, const std::string& key) {
  return number<int>(slot, key, [](int v) { return v >= 0; }, "must be >= 0");
}
Binder positive(double& slot, const std::string& key) {
  return number<double>(slot, key, [](double v) { return v > 0.0; }, "must be > 0");
}
Binder nonneg(double& slot, const std::string& key) {
  return number<double>(slot, key, [](double v) { return v >= 0.0; }, "must be >= 0");
}
Binder open_unit(double& slot, const std::string& key) {
  return number<double>(slot, key, [](double v) { return v > 0.0 && v < 1.0; }, "must lie in (0, 1)");
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Little-endian byte writer/reader for the binary formats.
class Writer {
 public:
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void i64(std::int64_t v) { put(std::uint64_t(v)); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { out_.append(s); }
  void str(std::string_view s) {
    u64(s.size());
    out_.append(s);
  }
  void f64s(const std::vector<double>& v) {
    u64(v.size());
    for (double d : v) f64(d);
  }
  const std::string& data() const { return out_; }

 private:
  template <class U>
  void put(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(char((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  std::int64_t i64() { return std::int64_t(get<std::uint64_t>()); }
  double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string str() { return bytes(length(1)); }
  std::vector<double> f64s() {
    std::vector<double> v(length(8));
    for (double& d : v) d = f64();
    return v;
  }
  std::size_t length(std::size_t elem) {
    const std::uint64_t n = u64();
    if (n > (data_.size() - pos_) / elem) throw std::runtime_error(what_ + ": length field exceeds file size");
    return std::size_t(n);
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) {
    if (data_.size() - pos_ < n) throw std::runtime_error(what_ + ": truncated");
  }
  template <class U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= U(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string what_;
};

constexpr std::string_view kArrayMagic = "MOLARRAY";
constexpr std::string_view kCheckpointMagic = "MOLCKPT1";
constexpr std::uint32_t kArrayVersion = 1;
constexpr std::uint32_t kDtypeReal = 1;
constexpr std::uint32_t kDtypeComplex = 2;

void write_header(Writer& w, std::uint32_t dtype, const Shape& shape, std::string_view tag) {
  w.bytes(kArrayMagic);
  w.u32(kArrayVersion);
  w.u32(dtype);
  w.u32(std::uint32_t(shape.size()));
  for (auto d : shape) w.u64(d);
  w.u32(std::uint32_t(tag.size()));
  w.bytes(tag);
}

std::uint32_t read_header(Reader& r, Shape& shape, std::string* tag) {
  if (r.bytes(kArrayMagic.size()) != kArrayMagic) throw std::runtime_error("array file: bad magic");
  if (r.u32() != kArrayVersion) throw std::runtime_error("array file: unsupported version");
  const std::uint32_t dtype = r.u32();
  const std::uint32_t rank = r.u32();
  if (rank > 8) throw std::runtime_error("array file: implausible rank");
  shape.assign(rank, 0);
  for (auto& d : shape) d = r.u64();
  const std::uint32_t tl = r.u32();
  std::string t = r.bytes(tl);
  if (tag) *tag = std::move(t);
  return dtype;
}

}  // namespace

DatasetConfig ExperimentConfig::dataset_config() const {
  DatasetConfig d;
  d.image_size = image_size;
  d.count = train_count + val_count;
  d.noise_sigma = noise_sigma;
  d.seed = seed;
  d.op = op;
  return d;
}

ExperimentConfig parse_config(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw ConfigError(e.msg, e.mark.line + 1);
  }
  ExperimentConfig c;
  if (root.IsNull()) return c;
  MolConfig& mol = c.train.mol;
  TrainConfig& tr = c.train;
  std::string kind = std::string(operator_kind_name(c.op.kind));
  std::string regime = std::string(regime_name(tr.regime));
  int image_size = int(c.image_size);
  int kind_line = 0, regime_line = 0, root_line = line_of(root);

  const std::map<std::string, Binder> dataset{
      {"train", nonneg_int(c.train_count, "train")},
      {"val", nonneg_int(c.val_count, "val")},
      {"noise_sigma", nonneg(c.noise_sigma, "noise_sigma")},
  };
  const std::map<std::string, Binder> op{
      {"kind",
       [&](const YAML::Node& n) {
         kind = scalar<std::string>(n, "kind", "a string");
         kind_line = line_of(n);
       }},
      {"acceleration", number<double>(c.op.acceleration, "acceleration", [](double v) { return v >= 1.0; },
                                      "must be >= 1")},
      {"center_fraction", open_unit(c.op.center_fraction, "center_fraction")},
      {"coils", positive_int(c.op.coils, "coils")},
      {"kernel_size", positive_int(c.op.kernel_size, "kernel_size")},
      {"factor", positive_int(c.op.factor, "factor")},
  };
  const std::map<std::string, Binder> net{
      {"layers", positive_int(c.net.layers, "layers")},
      {"hidden", positive_int(c.net.hidden, "hidden")},
      {"kernel", number<int>(c.net.kernel, "kernel", [](int v) { return v >= 1 && v % 2 == 1; },
                             "must be a positive odd integer")},
  };
  const std::map<std::string, Binder> solver{
      {"alpha", nonneg(mol.alpha, "alpha")},
      {"lambda", positive(mol.lambda, "lambda")},
      {"m", open_unit(mol.m, "m")},
      {"kappa", positive(mol.kappa, "kappa")},
      {"max_iter_forward", positive_int(mol.max_iter_forward, "max_iter_forward")},
      {"max_iter_backward", positive_int(mol.max_iter_backward, "max_iter_backward")},
      {"lambda0", positive(mol.lambda0, "lambda0")},
      {"cg_tol", positive(mol.cg.tol, "cg_tol")},
      {"cg_max_iter", positive_int(mol.cg.max_iter, "cg_max_iter")},
  };
  const std::map<std::string, Binder> train{
      {"regime",
       [&](const YAML::Node& n) {
         regime = scalar<std::string>(n, "regime", "a string");
         regime_line = line_of(n);
       }},
      {"epochs", nonneg_int(tr.epochs, "epochs")},
      {"lr_theta", nonneg(tr.lr_theta, "lr_theta")},
      {"lr_lambda", nonneg(tr.lr_lambda, "lr_lambda")},
      {"batch_size", number<int>(tr.batch_size, "batch_size", [](int v) { return v == 1; },
                                 "must be 1 (per-sample updates)")},
      {"beta0", nonneg(tr.beta0, "beta0")},
      {"beta_decay", number<double>(tr.beta_decay, "beta_decay", [](double v) { return v > 0.0 && v <= 1.0; },
                                    "must lie in (0, 1]")},
      {"sn_target", number<double>(tr.sn_target, "sn_target", [](double v) { return v >= 0.0 && v < 1.0; },
                                   "must lie in [0, 1)")},
      {"lambda_floor", positive(tr.lambda_floor, "lambda_floor")},
      {"shuffle", [&](const YAML::Node& n) { tr.shuffle = scalar<bool>(n, "shuffle", "true or false"); }},
      {"ascent_steps", positive_int(tr.ascent.steps, "ascent_steps")},
      {"ascent_step_fraction", positive(tr.ascent.step_fraction, "ascent_step_fraction")},
      {"ascent_init_fraction", positive(tr.ascent.init_fraction, "ascent_init_fraction")},
      {"checkpoint_every", nonneg_int(c.checkpoint_every, "checkpoint_every")},
  };
  const std::map<std::string, Binder> perturb{
      {"epsilons",
       [&](const YAML::Node& n) {
         if (!n.IsSequence()) throw ConfigError("'epsilons' must be a list of numbers", line_of(n));
         c.epsilons.clear();
         for (const auto& e : n) {
           const double v = scalar<double>(e, "epsilons", "a number");
           if (v < 0.0) throw ConfigError("'epsilons' entries must be >= 0", line_of(e));
           c.epsilons.push_back(v);
         }
       }},
      {"trials", positive_int(c.perturb_trials, "trials")},
      {"steps", nonneg_int(c.attack_steps, "steps")},
  };
  const std::map<std::string, Binder> certify{
      {"pairs", positive_int(c.certify_pairs, "pairs")},
      {"starts", positive_int(c.certify_starts, "starts")},
      {"kappa", positive(c.certify_kappa, "kappa")},
      {"max_iter", positive_int(c.certify_max_iter, "max_iter")},
  };
  const std::map<std::string, Binder> top{
      {"seed", number<std::uint64_t>(c.seed, "seed")},
      {"image_size", number<int>(image_size, "image_size", [](int v) { return v >= 4; }, "must be >= 4")},
      {"threads", positive_int(c.threads, "threads")},
      {"output", [&](const YAML::Node& n) { c.output = scalar<std::string>(n, "output", "a string"); }},
      {"dataset", [&](const YAML::Node& n) { bind_section(n, "dataset", dataset); }},
      {"operator", [&](const YAML::Node& n) { bind_section(n, "operator", op); }},
      {"net", [&](const YAML::Node& n) { bind_section(n, "net", net); }},
      {"mol", [&](const YAML::Node& n) { bind_section(n, "mol", solver); }},
      {"train", [&](const YAML::Node& n) { bind_section(n, "train", train); }},
      {"perturb", [&](const YAML::Node& n) { bind_section(n, "perturb", perturb); }},
      {"certify", [&](const YAML::Node& n) { bind_section(n, "certify", certify); }},
  };
  bind_section(root, "", top);

  c.image_size = std::size_t(image_size);
  try {
    c.op.kind = parse_operator_kind(kind);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), kind_line);
  }
  try {
    tr.regime = parse_regime(regime);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), regime_line);
  }
  tr.seed = c.seed;
  tr.threads = c.threads;
  try {
    tr.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), root_line);
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

std::string canonical_config(const ExperimentConfig& c) {
  const MolConfig& m = c.train.mol;
  const TrainConfig& t = c.train;
  nlohmann::json j;
  j["seed"] = c.seed;
  j["image_size"] = c.image_size;
  j["dataset"] = {{"train", c.train_count}, {"val", c.val_count}, {"noise_sigma", c.noise_sigma}};
  j["operator"] = {{"kind", operator_kind_name(c.op.kind)}, {"acceleration", c.op.acceleration},
                   {"center_fraction", c.op.center_fraction}, {"coils", c.op.coils},
                   {"kernel_size", c.op.kernel_size}, {"factor", c.op.factor}};
  j["net"] = {{"layers", c.net.layers}, {"hidden", c.net.hidden}, {"kernel", c.net.kernel}};
  j["mol"] = {{"alpha", m.alpha}, {"lambda", m.lambda}, {"m", m.m}, {"kappa", m.kappa},
              {"max_iter_forward", m.max_iter_forward}, {"max_iter_backward", m.max_iter_backward},
              {"lambda0", m.lambda0}, {"cg_tol", m.cg.tol}, {"cg_max_iter", m.cg.max_iter}};
  j["train"] = {{"regime", regime_name(t.regime)}, {"epochs", t.epochs}, {"lr_theta", t.lr_theta},
                {"lr_lambda", t.lr_lambda}, {"batch_size", t.batch_size}, {"beta0", t.beta0},
                {"beta_decay", t.beta_decay}, {"sn_target", t.sn_target}, {"lambda_floor", t.lambda_floor},
                {"shuffle", t.shuffle}, {"ascent_steps", t.ascent.steps},
                {"ascent_step_fraction", t.ascent.step_fraction},
                {"ascent_init_fraction", t.ascent.init_fraction}, {"checkpoint_every", c.checkpoint_every}};
  j["perturb"] = {{"epsilons", c.epsilons}, {"trials", c.perturb_trials}, {"steps", c.attack_steps}};
  j["certify"] = {{"pairs", c.certify_pairs}, {"starts", c.certify_starts}, {"kappa", c.certify_kappa},
                  {"max_iter", c.certify_max_iter}};
  return j.dump();
}

std::string config_hash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(canonical_config(cfg))));
  return buf;
}

void write_array(const std::filesystem::path& path, const ComplexImage& x, std::string_view tag) {
  Writer w;
  write_header(w, kDtypeComplex, x.shape(), tag);
  for (const auto& v : x) {
    w.f64(v.real());
    w.f64(v.imag());
  }
  write_file(path, w.data());
}

void write_array(const std::filesystem::path& path, const std::vector<double>& values, const Shape& shape,
                 std::string_view tag) {
  if (shape_volume(shape) != values.size()) throw ShapeError("write_array: shape does not match value count");
  Writer w;
  write_header(w, kDtypeReal, shape, tag);
  for (double v : values) w.f64(v);
  write_file(path, w.data());
}

ComplexImage read_complex_array(const std::filesystem::path& path, std::string* tag) {
  const std::string bytes = read_file(path);
  Reader r(bytes, path.string());
  Shape shape;
  if (read_header(r, shape, tag) != kDtypeComplex) throw std::runtime_error(path.string() + ": not a complex array");
  ComplexImage x(shape);
  for (auto& v : x) {
    const double re = r.f64();
    v = {re, r.f64()};
  }
  if (!r.done()) throw std::runtime_error(path.string() + ": trailing bytes");
  return x;
}

std::vector<double> read_real_array(const std::filesystem::path& path, Shape* shape, std::string* tag) {
  const std::string bytes = read_file(path);
  Reader r(bytes, path.string());
  Shape s;
  if (read_header(r, s, tag) != kDtypeReal) throw std::runtime_error(path.string() + ": not a real array");
  std::vector<double> v(shape_volume(s));
  for (double& d : v) d = r.f64();
  if (!r.done()) throw std::runtime_error(path.string() + ": trailing bytes");
  if (shape) *shape = s;
  return v;
}

bool Checkpoint::operator==(const Checkpoint& o) const {
  if (net.layers.size() != o.net.layers.size()) return false;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& a = net.layers[l];
    const auto& b = o.net.layers[l];
    if (a.in_channels != b.in_channels || a.out_channels != b.out_channels || a.kernel != b.kernel ||
        a.weights != b.weights || a.bias != b.bias) {
      return false;
    }
  }
  return version == o.version && lambda == o.lambda && theta_moments.first == o.theta_moments.first &&
         theta_moments.second == o.theta_moments.second && lambda_moments.first == o.lambda_moments.first &&
         lambda_moments.second == o.lambda_moments.second && step == o.step && epoch == o.epoch &&
         rng_state == o.rng_state && config_text == o.config_text && config_hash == o.config_hash;
}

Checkpoint make_checkpoint(const TrainState& state, const ExperimentConfig& cfg, std::string config_text) {
  Checkpoint c;
  c.net = state.net;
  c.lambda = state.lambda;
  c.theta_moments = state.theta_moments;
  c.lambda_moments = state.lambda_moments;
  c.step = state.step;
  c.epoch = state.epoch;
  std::ostringstream rs;
  rs << state.rng;
  c.rng_state = rs.str();
  c.config_text = std::move(config_text);
  c.config_hash = config_hash(cfg);
  return c;
}

TrainState restore_state(const Checkpoint& ckpt) {
  TrainState s;
  s.net = ckpt.net;
  s.lambda = ckpt.lambda;
  s.theta_moments = ckpt.theta_moments;
  s.lambda_moments = ckpt.lambda_moments;
  s.step = ckpt.step;
  s.epoch = ckpt.epoch;
  std::istringstream rs(ckpt.rng_state);
  rs >> s.rng;
  if (!rs) throw std::runtime_error("checkpoint: unreadable rng state");
  return s;
}

std::string serialize_checkpoint(const Checkpoint& c) {
  Writer w;
  w.bytes(kCheckpointMagic);
  w.u32(c.version);
  w.str(c.config_hash);
  w.str(c.config_text);
  w.u32(std::uint32_t(c.net.layers.size()));
  for (const auto& l : c.net.layers) {
    w.u32(std::uint32_t(l.in_channels));
    w.u32(std::uint32_t(l.out_channels));
    w.u32(std::uint32_t(l.kernel));
    w.f64s(l.weights);
    w.f64s(l.bias);
  }
  w.f64(c.lambda);
  w.f64s(c.theta_moments.first);
  w.f64s(c.theta_moments.second);
  w.f64s(c.lambda_moments.first);
  w.f64s(c.lambda_moments.second);
  w.i64(c.step);
  w.i64(c.epoch);
  w.str(c.rng_state);
  return w.data();
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes, "checkpoint");
  if (r.bytes(kCheckpointMagic.size()) != kCheckpointMagic) throw std::runtime_error("checkpoint: bad magic");
  Checkpoint c;
  c.version = r.u32();
  if (c.version != 1) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(c.version));
  c.config_hash = r.str();
  c.config_text = r.str();
  const std::uint32_t layers = r.u32();
  for (std::uint32_t i = 0; i < layers; ++i) {
    ConvLayer l;
    l.in_channels = int(r.u32());
    l.out_channels = int(r.u32());
    l.kernel = int(r.u32());
    l.weights = r.f64s();
    l.bias = r.f64s();
    if (l.weights.size() != std::size_t(l.in_channels) * l.out_channels * l.kernel * l.kernel ||
        l.bias.size() != std::size_t(l.out_channels)) {
      throw std::runtime_error("checkpoint: layer " + std::to_string(i) + " has inconsistent sizes");
    }
    c.net.layers.push_back(std::move(l));
  }
  c.lambda = r.f64();
  c.theta_moments.first = r.f64s();
  c.theta_moments.second = r.f64s();
  c.lambda_moments.first = r.f64s();
  c.lambda_moments.second = r.f64s();
  c.step = long(r.i64());
  c.epoch = int(r.i64());
  c.rng_state = r.str();
  if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

void write_pgm(const std::filesystem::path& path, const ComplexImage& x, std::string_view tag) {
  if (x.rank() != 2) throw ShapeError("write_pgm: need a 2D image");
  const auto mag = magnitude(x);
  double mx = 0.0;
  for (double v : mag) mx = std::max(mx, v);
  std::ostringstream os;
  os.precision(17);
  os << "P5\n# max " << mx << "\n";
  if (!tag.empty()) os << "# config_hash " << tag << "\n";
  os << x.width() << " " << x.height() << "\n255\n";
  std::string body = os.str();
  for (double v : mag) body.push_back(char(mx > 0.0 ? std::lround(255.0 * v / mx) : 0));
  write_file(path, body);
}

void write_csv(const std::filesystem::path& path, std::string_view tag, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::string out = "# config_hash: " + std::string(tag) + "\n";
  auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out.push_back(',');
      out += cells[i];
    }
    out.push_back('\n');
  };
  line(header);
  for (const auto& r : rows) line(r);
  write_file(path, out);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace mol
