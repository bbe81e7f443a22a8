#include <cstdio>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "freqfield/container.hpp"
#include "freqfield/ndgrid.hpp"

using namespace freqfield;

TEST_CASE("elementwise_mul examples") {
  Grid1D<double> a({3}, {1, 2, 3}), ones({3}, 1.0);
  CHECK(elementwise_mul(a, ones) == a);

  Grid1D<double> b({2}, {2, 3}), zeros({2}, 0.0);
  CHECK(elementwise_mul(b, zeros) == zeros);

  Grid1D<double> c({2}, {1.5, -2}), d({2}, {2, 0.5});
  CHECK(elementwise_mul(c, d) == Grid1D<double>({2}, {3, -1}));
}

TEST_CASE("elementwise_mul rejects mismatched shapes and names both") {
  Grid2D<double> a({2, 3}), b({3, 2});
  try {
    (void)elementwise_mul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[3x2]") != std::string::npos);
  }
}

TEST_CASE("elementwise_mul is commutative and associative") {
  std::mt19937_64 rng(3);
  // Small integers keep every product exact, so associativity is checkable
  // with operator==; commutativity is exact for any values.
  std::uniform_int_distribution<int> u(-64, 64);
  Grid3D<double> a({3, 4, 5}), b({3, 4, 5}), c({3, 4, 5});
  for (auto* g : {&a, &b, &c})
    for (auto& v : g->data()) v = u(rng);
  CHECK(elementwise_mul(a, b) == elementwise_mul(b, a));
  CHECK(elementwise_mul(elementwise_mul(a, b), c) == elementwise_mul(a, elementwise_mul(b, c)));
}

TEST_CASE("lerp_sample examples") {
  Grid1D<double> g({2}, {0, 10});
  CHECK(lerp_sample(g, {0.0}) == 0.0);
  CHECK(lerp_sample(g, {0.5}) == 5.0);
  CHECK(lerp_sample(g, {1.0}) == 10.0);

  Grid2D<double> m({2, 2}, {0, 1, 2, 3});
  // Brute-force bilinear: (1-u)(1-v) g00 + (1-u) v g01 + u (1-v) g10 + u v g11.
  const double u = 0.5, v = 0.5;
  const double expected = (1 - u) * (1 - v) * 0 + (1 - u) * v * 1 + u * (1 - v) * 2 + u * v * 3;
  CHECK(lerp_sample(m, {0.5, 0.5}) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(expected == 1.5);
}

TEST_CASE("lerp_sample clamps out-of-range coordinates") {
  Grid1D<double> g({3}, {1, 2, 4});
  CHECK(lerp_sample(g, {-0.3}) == 1.0);
  CHECK(lerp_sample(g, {1.7}) == 4.0);
}

TEST_CASE("lerp_sample hits nodes exactly") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  Grid3D<double> g({4, 5, 6});
  for (auto& v : g.data()) v = u(rng);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      for (std::size_t k = 0; k < 6; ++k) {
        const std::array<double, 3> c{i / 3.0, j / 4.0, k / 5.0};
        CHECK(lerp_sample(g, c) == doctest::Approx(g(i, j, k)).epsilon(1e-14));
      }
}

TEST_CASE("lerp_sample is linear in grid values") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 20; ++trial) {
    Grid3D<double> a({3, 4, 5}), b({3, 4, 5});
    for (auto& v : a.data()) v = u(rng);
    for (auto& v : b.data()) v = u(rng);
    const double lambda = u(rng);
    Grid3D<double> combo = a;
    combo.axpy(lambda, b);
    const std::array<double, 3> c{(u(rng) + 1) / 2, (u(rng) + 1) / 2, (u(rng) + 1) / 2};
    CHECK(std::abs(lerp_sample(combo, c) - (lerp_sample(a, c) + lambda * lerp_sample(b, c))) <
          1e-12);
  }
}

TEST_CASE("grid construction validates data length") {
  CHECK_THROWS_AS(Grid2D<double>({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Grid1D<double>({0}), ShapeError);
}

TEST_CASE("container round-trips bit-exactly") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> uf(-1e3f, 1e3f);
  Grid3D<float> g({2, 3, 4});
  for (auto& v : g.data()) v = uf(rng);
  g[5] = -0.0f;
  Grid1D<double> d({3}, {1.0 / 3.0, -1e-300, 6.02e23});

  Container c;
  c.put_grid("g", g);
  c.put_grid("d", d);
  c.put_scalar("pi", 3.141592653589793);
  c.put_int("n", -42);
  c.put_string("mode", "literal");

  const auto bytes = c.to_bytes();
  const auto back = Container::from_bytes(bytes);
  CHECK(back == c);
  CHECK(back.to_bytes() == bytes);
  CHECK(back.get_grid<float, 3>("g") == g);
  CHECK(std::signbit(back.get_grid<float, 3>("g")[5]));
  CHECK(back.get_grid<double, 1>("d") == d);
  CHECK(back.get_scalar("pi") == 3.141592653589793);
  CHECK(back.get_int("n") == -42);
  CHECK(back.get_string("mode") == "literal");

  const auto path = std::filesystem::temp_directory_path() / "freqfield_container_test.bin";
  c.write(path);
  CHECK(Container::read(path) == c);
  std::filesystem::remove(path);
}

TEST_CASE("container header is little-endian and versioned") {
  Container c;
  c.put_int("x", 1);
  const auto bytes = c.to_bytes();
  REQUIRE(bytes.size() > 16);
  CHECK(std::string(bytes.begin(), bytes.begin() + 7) == "FQFIELD");
  CHECK(bytes[8] == 1);  // version, low byte first
  CHECK(bytes[9] == 0);
  CHECK(bytes[12] == 1);  // one entry
}

TEST_CASE("container rejects corrupt input with diagnostics") {
  Container c;
  c.put_scalar("x", 2.0);
  auto bytes = c.to_bytes();

  auto bad_version = bytes;
  bad_version[8] = 9;
  CHECK_THROWS_WITH_AS(Container::from_bytes(bad_version),
                       doctest::Contains("version 9"), FormatError);

  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  CHECK_THROWS_WITH_AS(Container::from_bytes(truncated), doctest::Contains("truncated"),
                       FormatError);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(Container::from_bytes(bad_magic), FormatError);
  CHECK_THROWS_AS(c.get_scalar("missing"), FormatError);
}
