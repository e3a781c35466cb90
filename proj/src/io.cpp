#include "pnpcsi/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace pnpcsi {

namespace {

constexpr char kDatasetMagic[4] = {'P', 'N', 'P', 'D'};
constexpr char kSplitMagic[4] = {'S', 'P', 'L', 'T'};
constexpr char kTensorMagic[4] = {'P', 'N', 'P', 'W'};

template <typename U>
void put_le(std::ostream& os, U v) {
  std::array<char, sizeof(U)> b{};
  for (std::size_t i = 0; i < sizeof(U); ++i)
    b[i] = static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
  os.write(b.data(), b.size());
}

template <typename U>
U get_le(std::istream& is, const char* what) {
  std::array<unsigned char, sizeof(U)> b{};
  is.read(reinterpret_cast<char*>(b.data()), b.size());
  if (!is) throw IoError(std::string("truncated file while reading ") + what);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return static_cast<U>(v);
}

void put_f32(std::ostream& os, float f) {
  put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(f));
}

float get_f32(std::istream& is, const char* what) {
  return std::bit_cast<float>(get_le<std::uint32_t>(is, what));
}

void put_matrix(std::ostream& os, const CMatrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      put_f32(os, static_cast<float>(m(i, j).real()));
      put_f32(os, static_cast<float>(m(i, j).imag()));
    }
}

CMatrix get_matrix(std::istream& is, int rows, int cols) {
  CMatrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const float re = get_f32(is, "sample matrix");
      const float im = get_f32(is, "sample matrix");
      m(i, j) = cplx(re, im);
    }
  return m;
}

void expect_magic(std::istream& is, const char (&magic)[4], const char* what) {
  char b[4] = {};
  is.read(b, 4);
  if (!is || std::memcmp(b, magic, 4) != 0)
    throw IoError(std::string("bad magic: not a ") + what + " file");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "' for reading");
  return is;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void write_dataset(const std::string& path, const Dataset& ds) {
  auto os = open_out(path);
  const std::size_t count = ds.train.size() + ds.val.size() + ds.test.size();
  os.write(kDatasetMagic, 4);
  put_le<std::uint32_t>(os, kDatasetVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ds.n_subcarriers));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ds.n_antennas));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ds.crop_rows));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(count));
  for (const auto* split : {&ds.train, &ds.val, &ds.test})
    for (const auto& s : *split) {
      if (s.clean.subcarriers() != ds.n_subcarriers ||
          s.clean.antennas() != ds.n_antennas)
        throw DimensionError("dataset sample shape differs from the header");
      put_matrix(os, s.clean.values);
      put_f32(os, static_cast<float>(s.sigma2));
      put_matrix(os, s.noisy.values);
    }
  os.write(kSplitMagic, 4);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ds.train.size()));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ds.val.size()));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ds.test.size()));
  if (!os) throw IoError("write failed for '" + path + "'");
}

Dataset read_dataset(const std::string& path) {
  auto is = open_in(path);
  expect_magic(is, kDatasetMagic, "PNPD dataset");
  const auto version = get_le<std::uint32_t>(is, "version");
  if (version != kDatasetVersion)
    throw IoError("unsupported dataset version " + std::to_string(version));
  Dataset ds;
  ds.n_subcarriers = static_cast<int>(get_le<std::uint32_t>(is, "N_s"));
  ds.n_antennas = static_cast<int>(get_le<std::uint32_t>(is, "N_t"));
  ds.crop_rows = static_cast<int>(get_le<std::uint32_t>(is, "crop"));
  const auto count = get_le<std::uint32_t>(is, "count");
  const DftPlan plan(ds.n_subcarriers, ds.n_antennas, ds.crop_rows);

  std::vector<Sample> all;
  all.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Sample s;
    s.clean = ChannelMatrix(get_matrix(is, ds.n_subcarriers, ds.n_antennas));
    s.sigma2 = get_f32(is, "sigma2");
    s.noisy = ChannelMatrix(get_matrix(is, ds.n_subcarriers, ds.n_antennas));
    fill_angular(s, plan);
    all.push_back(std::move(s));
  }

  std::uint32_t n_train = 0, n_val = 0, n_test = count;
  char tag[4] = {};
  is.read(tag, 4);
  if (is.gcount() == 4 && std::memcmp(tag, kSplitMagic, 4) == 0) {
    n_train = get_le<std::uint32_t>(is, "split trailer");
    n_val = get_le<std::uint32_t>(is, "split trailer");
    n_test = get_le<std::uint32_t>(is, "split trailer");
    if (static_cast<std::uint64_t>(n_train) + n_val + n_test != count)
      throw IoError("split trailer does not add up to the sample count");
  } else if (is.gcount() != 0) {
    throw IoError("unexpected trailing bytes in dataset file");
  }
  auto it = std::make_move_iterator(all.begin());
  ds.train.assign(it, it + n_train);
  ds.val.assign(it + n_train, it + n_train + n_val);
  ds.test.assign(it + n_train + n_val, it + count);
  return ds;
}

std::size_t NamedTensor::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void write_tensors(std::ostream& os, const std::vector<NamedTensor>& tensors) {
  os.write(kTensorMagic, 4);
  put_le<std::uint32_t>(os, kTensorFileVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xffff) throw IoError("tensor name too long");
    if (t.dims.size() > 0xff) throw IoError("tensor rank too large");
    if (t.data.size() != t.element_count())
      throw DimensionError("tensor '" + t.name + "' payload does not match dims");
    put_le<std::uint16_t>(os, static_cast<std::uint16_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) put_le<std::uint32_t>(os, d);
    for (float f : t.data) put_f32(os, f);
  }
  if (!os) throw IoError("tensor file write failed");
}

std::vector<NamedTensor> read_tensors(std::istream& is) {
  expect_magic(is, kTensorMagic, "PNPW tensor");
  const auto version = get_le<std::uint32_t>(is, "version");
  if (version != kTensorFileVersion)
    throw IoError("unsupported tensor file version " + std::to_string(version));
  const auto count = get_le<std::uint32_t>(is, "tensor count");
  std::vector<NamedTensor> out(count);
  for (auto& t : out) {
    const auto len = get_le<std::uint16_t>(is, "name length");
    t.name.resize(len);
    is.read(t.name.data(), len);
    if (!is) throw IoError("truncated tensor name");
    const auto ndim = get_le<std::uint8_t>(is, "ndim");
    t.dims.resize(ndim);
    for (auto& d : t.dims) d = get_le<std::uint32_t>(is, "dims");
    t.data.resize(t.element_count());
    for (auto& f : t.data) f = get_f32(is, "tensor payload");
  }
  return out;
}

void write_tensors(const std::string& path,
                   const std::vector<NamedTensor>& tensors) {
  auto os = open_out(path);
  write_tensors(os, tensors);
}

std::vector<NamedTensor> read_tensors(const std::string& path) {
  auto is = open_in(path);
  return read_tensors(is);
}

const NamedTensor& find_tensor(const std::vector<NamedTensor>& tensors,
                               const std::string& name) {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw IoError("tensor '" + name + "' not found");
}

std::vector<NamedTensor> weights_to_tensors(const DenoiserWeights& w) {
  w.validate();
  std::vector<NamedTensor> out;
  const auto& a = w.arch;
  out.push_back({"arch",
                 {6},
                 {static_cast<float>(a.unshuffle), static_cast<float>(a.in_channels),
                  static_cast<float>(a.width), static_cast<float>(a.mid_layers),
                  static_cast<float>(a.kernel), a.normalize_input ? 1.0f : 0.0f}});
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    const auto& l = w.layers[i];
    const auto k = static_cast<std::uint32_t>(l.k);
    out.push_back({w.names[i] + ".weight",
                   {static_cast<std::uint32_t>(l.cout),
                    static_cast<std::uint32_t>(l.cin), k, k},
                   l.weight});
    out.push_back({w.names[i] + ".bias",
                   {static_cast<std::uint32_t>(l.cout)},
                   l.bias});
  }
  return out;
}

DenoiserWeights weights_from_tensors(const std::vector<NamedTensor>& tensors) {
  const auto& at = find_tensor(tensors, "arch");
  if (at.data.size() != 6) throw IoError("malformed arch descriptor");
  DenoiserArch arch;
  arch.unshuffle = static_cast<int>(at.data[0]);
  arch.in_channels = static_cast<int>(at.data[1]);
  arch.width = static_cast<int>(at.data[2]);
  arch.mid_layers = static_cast<int>(at.data[3]);
  arch.kernel = static_cast<int>(at.data[4]);
  arch.normalize_input = at.data[5] != 0.0f;
  DenoiserWeights w = DenoiserWeights::zeros(arch);
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    auto& l = w.layers[i];
    const auto& wt = find_tensor(tensors, w.names[i] + ".weight");
    const auto& bt = find_tensor(tensors, w.names[i] + ".bias");
    const std::vector<std::uint32_t> wdims = {
        static_cast<std::uint32_t>(l.cout), static_cast<std::uint32_t>(l.cin),
        static_cast<std::uint32_t>(l.k), static_cast<std::uint32_t>(l.k)};
    if (wt.dims != wdims || bt.dims != std::vector<std::uint32_t>{
                                           static_cast<std::uint32_t>(l.cout)})
      throw DimensionError("tensor shapes for " + w.names[i] +
                           " do not match the architecture descriptor");
    l.weight = wt.data;
    l.bias = bt.data;
  }
  return w;
}

void save_weights(const std::string& path, const DenoiserWeights& w) {
  write_tensors(path, weights_to_tensors(w));
}

DenoiserWeights load_weights(const std::string& path) {
  return weights_from_tensors(read_tensors(path));
}

NamedTensor complex_tensor(const std::string& name, const CMatrix& m) {
  NamedTensor t;
  t.name = name;
  t.dims = {static_cast<std::uint32_t>(m.rows()),
            static_cast<std::uint32_t>(m.cols()), 2};
  t.data.reserve(m.size() * 2);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      t.data.push_back(static_cast<float>(m(i, j).real()));
      t.data.push_back(static_cast<float>(m(i, j).imag()));
    }
  return t;
}

CMatrix tensor_complex(const NamedTensor& t) {
  if (t.dims.size() != 3 || t.dims[2] != 2)
    throw DimensionError("tensor '" + t.name + "' is not a complex matrix");
  CMatrix m(t.dims[0], t.dims[1]);
  std::size_t p = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j, p += 2)
      m(i, j) = cplx(t.data[p], t.data[p + 1]);
  return m;
}

std::string sha256_file(const std::string& path) {
  auto is = open_in(path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw IoError("cannot initialize SHA-256");
  }
  std::array<char, 1 << 16> buf{};
  while (is) {
    is.read(buf.data(), buf.size());
    if (is.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), is.gcount());
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md.data(), &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

KeyValueConfig KeyValueConfig::parse(std::istream& is,
                                     const std::string& origin) {
  KeyValueConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument(origin + ":" + std::to_string(lineno) +
                            ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty())
      throw InvalidArgument(origin + ":" + std::to_string(lineno) +
                            ": empty key");
    cfg.kv_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path + "'");
  return parse(is, path);
}

bool KeyValueConfig::has(const std::string& key) const {
  return kv_.count(key) != 0;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& def) const {
  return get(key).value_or(def);
}

double parse_number(const std::string& text) {
  const std::string s = trim(text);
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (const auto slash = s.find('/'); slash != std::string::npos) {
    const double num = parse_number(s.substr(0, slash));
    const double den = parse_number(s.substr(slash + 1));
    if (den == 0.0) throw InvalidArgument("division by zero in '" + s + "'");
    return num / den;
  }
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last || s.empty())
    throw InvalidArgument("not a number: '" + text + "'");
  return v;
}

double KeyValueConfig::get_double(const std::string& key, double def) const {
  const auto v = get(key);
  if (!v) return def;
  try {
    return parse_number(*v);
  } catch (const InvalidArgument&) {
    throw InvalidArgument("config key '" + key + "': not a number: '" + *v + "'");
  }
}

long long KeyValueConfig::get_int(const std::string& key, long long def) const {
  const auto v = get(key);
  if (!v) return def;
  long long out = 0;
  const auto res = std::from_chars(v->data(), v->data() + v->size(), out);
  if (res.ec != std::errc() || res.ptr != v->data() + v->size())
    throw InvalidArgument("config key '" + key + "': not an integer: '" + *v +
                          "'");
  return out;
}

bool KeyValueConfig::get_bool(const std::string& key, bool def) const {
  const auto v = get(key);
  if (!v) return def;
  if (*v == "1" || *v == "true" || *v == "yes" || *v == "on") return true;
  if (*v == "0" || *v == "false" || *v == "no" || *v == "off") return false;
  throw InvalidArgument("config key '" + key + "': not a boolean: '" + *v + "'");
}

std::vector<double> KeyValueConfig::get_doubles(
    const std::string& key, const std::vector<double>& def) const {
  const auto v = get(key);
  if (!v) return def;
  std::vector<double> out;
  std::stringstream ss(*v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    try {
      out.push_back(parse_number(item));
    } catch (const InvalidArgument&) {
      throw InvalidArgument("config key '" + key + "': bad list item '" + item +
                            "'");
    }
  }
  return out;
}

std::string CsvWriter::quote(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) *os_ << ',';
    *os_ << quote(fields[i]);
  }
  *os_ << "\r\n";
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

}  // namespace pnpcsi
