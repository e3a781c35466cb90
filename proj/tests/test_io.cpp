#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "pnpcsi/io.hpp"
#include "test_util.hpp"

using namespace pnpcsi;
using pnpcsi::testing::random_cmatrix;
using pnpcsi::testing::temp_path;

namespace {

std::string read_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

std::uint32_t u32_at(const std::string& b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[off + i]);
  return v;
}

Dataset tiny_dataset() {
  DatasetConfig cfg;
  cfg.channel.n_subcarriers = 16;
  cfg.channel.n_antennas = 8;
  cfg.channel.crop_rows = 8;
  cfg.n_train = 3;
  cfg.n_val = 1;
  cfg.n_test = 2;
  return gen_dataset(cfg, 9);
}

}  // namespace

TEST_CASE("dataset file layout") {
  const Dataset ds = tiny_dataset();
  const auto path = temp_path("layout.pnpd");
  write_dataset(path, ds);
  const std::string b = read_bytes(path);
  CHECK(b.substr(0, 4) == "PNPD");
  CHECK(u32_at(b, 4) == kDatasetVersion);
  CHECK(u32_at(b, 8) == 16);
  CHECK(u32_at(b, 12) == 8);
  CHECK(u32_at(b, 16) == 8);
  CHECK(u32_at(b, 20) == 6);
  const std::size_t per_sample = 2 * (16 * 8 * 2 * 4) + 4;
  REQUIRE(b.size() == 24 + 6 * per_sample + 16);
  // First entry of the first clean matrix, real then imaginary.
  float re = 0, im = 0;
  std::memcpy(&re, b.data() + 24, 4);
  std::memcpy(&im, b.data() + 28, 4);
  CHECK(re == static_cast<float>(ds.train[0].clean.values(0, 0).real()));
  CHECK(im == static_cast<float>(ds.train[0].clean.values(0, 0).imag()));
  float s2 = 0;
  std::memcpy(&s2, b.data() + 24 + 16 * 8 * 8, 4);
  CHECK(s2 == static_cast<float>(ds.train[0].sigma2));
  CHECK(b.substr(24 + 6 * per_sample, 4) == "SPLT");
}

TEST_CASE("dataset round trip at float precision") {
  const Dataset ds = tiny_dataset();
  const auto path = temp_path("rt.pnpd");
  write_dataset(path, ds);
  const Dataset back = read_dataset(path);
  CHECK(back.n_subcarriers == 16);
  CHECK(back.train.size() == 3);
  CHECK(back.val.size() == 1);
  CHECK(back.test.size() == 2);
  const auto& a = ds.test[1];
  const auto& b = back.test[1];
  CHECK((a.clean.values - b.clean.values).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((a.noisy_ad.values - b.noisy_ad.values).cwiseAbs().maxCoeff() < 1e-5);
  CHECK(b.sigma2 == doctest::Approx(a.sigma2).epsilon(1e-6));

  // Rewriting what was read gives identical bytes.
  const auto path2 = temp_path("rt2.pnpd");
  write_dataset(path2, back);
  CHECK(read_bytes(path) == read_bytes(path2));
}

TEST_CASE("dataset without a split trailer loads as test data") {
  const Dataset ds = tiny_dataset();
  const auto path = temp_path("notrailer.pnpd");
  write_dataset(path, ds);
  std::string b = read_bytes(path);
  b.resize(b.size() - 16);
  std::ofstream(path, std::ios::binary) << b;
  const Dataset back = read_dataset(path);
  CHECK(back.train.empty());
  CHECK(back.test.size() == 6);
}

TEST_CASE("dataset reader rejects damaged files") {
  const Dataset ds = tiny_dataset();
  const auto path = temp_path("bad.pnpd");
  write_dataset(path, ds);
  const std::string good = read_bytes(path);

  std::string b = good;
  b[0] = 'X';
  std::ofstream(path, std::ios::binary) << b;
  CHECK_THROWS_AS(read_dataset(path), IoError);

  b = good.substr(0, 100);
  std::ofstream(path, std::ios::binary) << b;
  CHECK_THROWS_AS(read_dataset(path), IoError);

  b = good;
  b[4] = 9;
  std::ofstream(path, std::ios::binary) << b;
  CHECK_THROWS_AS(read_dataset(path), IoError);

  CHECK_THROWS_AS(read_dataset(temp_path("missing.pnpd")), IoError);
}

TEST_CASE("tensor container layout and round trip") {
  std::vector<NamedTensor> ts;
  ts.push_back({"a", {2, 3}, {1, 2, 3, 4, 5, 6}});
  ts.push_back({"\xce\xbb.bias", {1}, {-0.5f}});
  std::stringstream ss;
  write_tensors(ss, ts);
  const std::string b = ss.str();
  CHECK(b.substr(0, 4) == "PNPW");
  CHECK(u32_at(b, 4) == kTensorFileVersion);
  CHECK(u32_at(b, 8) == 2);
  CHECK(static_cast<unsigned char>(b[12]) == 1);  // name length, LE u16
  CHECK(b[13] == 0);
  CHECK(b[14] == 'a');
  CHECK(b[15] == 2);  // ndim
  CHECK(u32_at(b, 16) == 2);
  CHECK(u32_at(b, 20) == 3);
  float first = 0;
  std::memcpy(&first, b.data() + 24, 4);
  CHECK(first == 1.0f);

  const auto back = read_tensors(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[1].name == ts[1].name);
  CHECK(back[0].dims == ts[0].dims);
  CHECK(back[0].data == ts[0].data);
  CHECK(find_tensor(back, "a").element_count() == 6);
  CHECK_THROWS_AS(find_tensor(back, "b"), IoError);

  std::vector<NamedTensor> bad{{"x", {2, 2}, {1, 2, 3}}};
  std::stringstream s2;
  CHECK_THROWS_AS(write_tensors(s2, bad), DimensionError);
}

TEST_CASE("weights round trip through a file") {
  DenoiserArch arch;
  arch.width = 8;
  arch.mid_layers = 1;
  const auto w = DenoiserWeights::he_uniform(arch, 3);
  const auto path = temp_path("w.pnpw");
  save_weights(path, w);
  const auto back = load_weights(path);
  CHECK(back.arch == arch);
  REQUIRE(back.layers.size() == w.layers.size());
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    CHECK(back.names[i] == w.names[i]);
    CHECK(back.layers[i].weight == w.layers[i].weight);
    CHECK(back.layers[i].bias == w.layers[i].bias);
  }
  const auto ts = read_tensors(path);
  CHECK(find_tensor(ts, "conv0.weight").dims ==
        std::vector<std::uint32_t>{8, 12, 3, 3});
  CHECK(find_tensor(ts, "conv2.bias").dims == std::vector<std::uint32_t>{8});

  // Identical weights give identical bytes and hashes.
  const auto path2 = temp_path("w2.pnpw");
  save_weights(path2, back);
  CHECK(sha256_file(path) == sha256_file(path2));

  auto shapes = ts;
  for (auto& t : shapes)
    if (t.name == "conv1.weight") t.dims[1] = 7;
  CHECK_THROWS(weights_from_tensors(shapes));
}

TEST_CASE("sha256 of known content") {
  const auto path = temp_path("abc.txt");
  std::ofstream(path, std::ios::binary) << "abc";
  CHECK(sha256_file(path) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("complex tensors") {
  std::mt19937_64 rng(1);
  const CMatrix m = random_cmatrix(3, 5, rng);
  const auto t = complex_tensor("m", m);
  CHECK(t.dims == std::vector<std::uint32_t>{3, 5, 2});
  CHECK((tensor_complex(t) - m).cwiseAbs().maxCoeff() < 1e-6);
  NamedTensor bad{"b", {3, 5}, std::vector<float>(15)};
  CHECK_THROWS_AS(tensor_complex(bad), DimensionError);
}

TEST_CASE("key value config") {
  std::istringstream is(
      "# comment\n"
      "width = 32\n"
      "  cr = 1/4, 1/8 ,1/16   # trailing\n"
      "snr = inf\n"
      "flag = yes\n"
      "\n"
      "name = hello world\n");
  const auto kv = KeyValueConfig::parse(is, "t");
  CHECK(kv.get_int("width", 0) == 32);
  CHECK(kv.get_int("missing", 7) == 7);
  CHECK(kv.get_doubles("cr", {}) == std::vector<double>{0.25, 0.125, 0.0625});
  CHECK(std::isinf(kv.get_double("snr", 0)));
  CHECK(kv.get_bool("flag", false));
  CHECK(kv.get_string("name", "") == "hello world");
  CHECK_THROWS_AS(kv.get_int("name", 0), InvalidArgument);
  CHECK_THROWS_AS(kv.get_bool("width", false), InvalidArgument);

  std::istringstream bad("no equals sign\n");
  CHECK_THROWS_AS(KeyValueConfig::parse(bad, "t"), InvalidArgument);
}

TEST_CASE("parse_number") {
  CHECK(parse_number("0.5") == 0.5);
  CHECK(parse_number("+2") == 2.0);
  CHECK(parse_number("-inf") < 0);
  CHECK(parse_number("3/4") == 0.75);
  CHECK_THROWS_AS(parse_number("1/0"), InvalidArgument);
  CHECK_THROWS_AS(parse_number("abc"), InvalidArgument);
  CHECK_THROWS_AS(parse_number(""), InvalidArgument);
}

TEST_CASE("csv quoting and number formatting") {
  std::ostringstream os;
  CsvWriter w(os);
  w.row({"a", "b,c", "say \"hi\"", ""});
  CHECK(os.str() == "a,\"b,c\",\"say \"\"hi\"\"\",\r\n");
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(-12.5) == "-12.5");
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_double(std::nan("")) == "nan");
  const double x = 1.0 / 3.0;
  CHECK(std::stod(format_double(x)) == x);
}
