#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "pcdiag/data.hpp"
#include "pcdiag/error.hpp"

using namespace pcdiag;
using geom::Vec3;

namespace {

void expect_error(ErrorKind kind, const std::function<void()>& f, const std::string& needle = "") {
  try {
    f();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == kind);
    if (!needle.empty()) CHECK(std::string(e.what()).find(needle) != std::string::npos);
  }
}

double norm(const Vec3& p) { return std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]); }

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("shape generation") {
  for (auto name : data::shape_class_names()) {
    const auto c = data::shape_class_from_string(name);
    const auto cloud = data::generate_shape(c, 200, 3);
    CHECK(cloud.size() == 200);
    CHECK(cloud.label == static_cast<std::size_t>(c));
    CHECK(data::to_string(c) == name);
    const auto again = data::generate_shape(c, 200, 3);
    CHECK(again.points == cloud.points);
    const auto once = data::normalize(cloud);
    const auto twice = data::normalize(once);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      for (int k = 0; k < 3; ++k) CHECK(std::abs(twice.points[i][k] - once.points[i][k]) <= 1e-9);
    }
  }
  for (const auto& p : data::generate_shape(data::ShapeClass::sphere, 300, 4).points) {
    CHECK(std::abs(norm(p) - 1.0) <= 0.05);
  }
  for (const auto& p : data::generate_shape(data::ShapeClass::plane, 300, 5).points) CHECK(std::abs(p[2]) <= 0.05);
  CHECK(data::generate_shape(data::ShapeClass::cube, 64, 1).points !=
        data::generate_shape(data::ShapeClass::cube, 64, 2).points);
  expect_error(ErrorKind::shape_class, [] { data::shape_class_from_string("teapot"); }, "teapot");
  expect_error(ErrorKind::count, [] { data::generate_shape(data::ShapeClass::cone, 7, 1); });
}

TEST_CASE("normalize") {
  geom::PointCloud two;
  two.points = {{0, 0, 0}, {2, 0, 0}};
  two.label = 4;
  const auto n = data::normalize(two);
  CHECK(n.points == std::vector<Vec3>{{-1, 0, 0}, {1, 0, 0}});
  CHECK(n.label == 4);

  auto cloud = testing::random_cloud(50, 1);
  cloud.fg_mask = std::vector<bool>(50, true);
  (*cloud.fg_mask)[3] = false;
  const auto a = data::normalize(cloud);
  Vec3 c{0, 0, 0};
  double r = 0.0;
  for (const auto& p : a.points) {
    for (int k = 0; k < 3; ++k) c[k] += p[k] / 50.0;
    r = std::max(r, norm(p));
  }
  CHECK(norm(c) <= 1e-9);
  CHECK(std::abs(r - 1.0) <= 1e-9);
  CHECK(a.fg_mask == cloud.fg_mask);

  auto moved = cloud;
  for (auto& p : moved.points) p = {5 * p[0] + 3, 5 * p[1] - 2, 5 * p[2] + 7};
  const auto b = data::normalize(moved);
  for (std::size_t i = 0; i < 50; ++i) {
    for (int k = 0; k < 3; ++k) CHECK(std::abs(a.points[i][k] - b.points[i][k]) <= 1e-9);
  }

  geom::PointCloud same;
  same.points.assign(4, {1, 2, 3});
  expect_error(ErrorKind::degeneracy, [&] { data::normalize(same); });
}

TEST_CASE("background composition") {
  const auto fg = data::generate_shape(data::ShapeClass::torus, 128, 7);
  const auto donor = data::generate_shape(data::ShapeClass::cube, 200, 8);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto out = data::compose_background(fg, donor, 64, seed);
    REQUIRE(out.size() == 192);
    REQUIRE(out.fg_mask);
    std::size_t count = 0;
    for (bool m : *out.fg_mask) count += m;
    CHECK(count == 128);
    CHECK(out.label == fg.label);

    std::vector<Vec3> bg(out.points.begin() + 128, out.points.end());
    const double fg_nn = geom::mean_nn_distance(fg.points);
    CHECK(geom::mean_nn_distance(bg) == doctest::Approx(fg_nn).epsilon(0.1));

    double radius = 0.0;
    for (const auto& p : fg.points) radius = std::max(radius, norm(p));
    double gap = 1e300;
    for (const auto& b : bg) {
      for (const auto& f : fg.points) gap = std::min(gap, std::sqrt(geom::squared_distance(b, f)));
    }
    CHECK(gap >= 0.2 * radius);
  }
  CHECK(data::compose_background(fg, donor, 64, 1).points == data::compose_background(fg, donor, 64, 1).points);
  expect_error(ErrorKind::count, [&] { data::compose_background(fg, donor, 201, 1); });
  expect_error(ErrorKind::label, [&] { data::compose_background(fg, fg, 16, 1); });
}

TEST_CASE("xyz and off loaders") {
  const auto dir = testing::scratch_dir("data-loaders");
  write_text(dir / "three.xyz", "0 0 0\n1 2 3\n-4.5 6e-1 7\n");
  const auto three = data::load_xyz(dir / "three.xyz");
  CHECK(three.points == std::vector<Vec3>{{0, 0, 0}, {1, 2, 3}, {-4.5, 0.6, 7}});
  CHECK_FALSE(three.fg_mask);

  write_text(dir / "masked.xyz", "0 0 0 1\n1 0 0 0\n");
  const auto masked = data::load_xyz(dir / "masked.xyz");
  CHECK(masked.fg_mask == std::vector<bool>{true, false});

  write_text(dir / "quad.off", "OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 1 2\n");
  const auto quad = data::load_off(dir / "quad.off");
  CHECK(quad.points == std::vector<Vec3>{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  CHECK(data::load_cloud(dir / "quad.off").points == quad.points);

  write_text(dir / "nan.xyz", "0 0 0\n1 1 1\n1 2 nan\n");
  expect_error(ErrorKind::value, [&] { data::load_xyz(dir / "nan.xyz"); }, "line 3");
  write_text(dir / "short.xyz", "0 0 0\n1 1\n");
  expect_error(ErrorKind::parse, [&] { data::load_xyz(dir / "short.xyz"); }, "line 2");
  write_text(dir / "word.xyz", "0 0 zero\n");
  expect_error(ErrorKind::parse, [&] { data::load_xyz(dir / "word.xyz"); }, "line 1");
  write_text(dir / "bad.off", "PLY\n4 1 0\n");
  expect_error(ErrorKind::parse, [&] { data::load_off(dir / "bad.off"); }, "line 1");
  expect_error(ErrorKind::io, [&] { data::load_xyz(dir / "missing.xyz"); }, "missing.xyz");

  auto cloud = testing::random_cloud(30, 9);
  cloud.fg_mask = std::vector<bool>(30, false);
  (*cloud.fg_mask)[0] = true;
  data::write_xyz(cloud, dir / "round.xyz");
  const auto back = data::load_xyz(dir / "round.xyz");
  CHECK(back.fg_mask == cloud.fg_mask);
  for (std::size_t i = 0; i < 30; ++i) {
    for (int k = 0; k < 3; ++k) {
      CHECK(std::abs(back.points[i][k] - cloud.points[i][k]) <= 1e-9 * std::max(1.0, std::abs(cloud.points[i][k])));
    }
  }
}

TEST_CASE("dataset build") {
  const auto dir = testing::scratch_dir("data-build");
  data::DatasetConfig cfg;
  cfg.classes = {"sphere", "cone", "plane"};
  cfg.train_per_class = 3;
  cfg.test_per_class = 2;
  cfg.points = 32;
  cfg.seed = 11;
  const auto m = data::build_dataset(cfg, dir / "a");
  CHECK(m.train.size() == 9);
  CHECK(m.test.size() == 6);
  CHECK(m.classes == cfg.classes);
  for (const auto& e : m.train) CHECK(std::filesystem::exists(dir / "a" / e.file));
  CHECK(std::filesystem::exists(dir / "a" / "manifest.json"));

  const auto loaded = data::load_manifest(dir / "a" / "manifest.json");
  CHECK(data::manifest_json(loaded) == data::manifest_json(m));
  const auto test = data::load_split(loaded, dir / "a" / "manifest.json", "test");
  const auto mem = data::generate_dataset(cfg);
  REQUIRE(test.size() == mem.test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    CHECK(test[i].label == mem.test[i].label);
    CHECK(test[i].points == mem.test[i].points);
  }

  data::build_dataset(cfg, dir / "b");
  for (const auto& e : m.train) CHECK(read_text(dir / "a" / e.file) == read_text(dir / "b" / e.file));
  CHECK(read_text(dir / "a" / "manifest.json") != "");

  cfg.background = true;
  cfg.background_points = 16;
  const auto bg = data::build_dataset(cfg, dir / "bg");
  for (const auto& e : bg.test) {
    CHECK(e.background);
    const auto text = read_text(dir / "bg" / e.file);
    std::istringstream first(text.substr(0, text.find('\n')));
    int fields = 0;
    for (std::string tok; first >> tok;) ++fields;
    CHECK(fields == 4);
  }
  const auto bg_test = data::load_split(bg, dir / "bg" / "manifest.json", "test");
  for (const auto& c : bg_test) {
    CHECK(c.size() == 48);
    REQUIRE(c.fg_mask);
  }

  cfg.classes = {"sphere", "blob"};
  expect_error(ErrorKind::shape_class, [&] { data::generate_dataset(cfg); });
  expect_error(ErrorKind::parse, [&] {
    write_text(dir / "broken.json", "{\"classes\": [");
    data::load_manifest(dir / "broken.json");
  });
}

}  // TEST_SUITE
