#include "pcdiag/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "pcdiag/error.hpp"
#include "pcdiag/rng.hpp"

namespace pcdiag::data {

namespace fs = std::filesystem;
using geom::PointCloud;
using geom::Vec3;

namespace {

constexpr std::string_view kNames[] = {"sphere", "cube", "cylinder", "cone", "torus", "plane"};
constexpr double kPi = std::numbers::pi;

double truncated_normal(Rng& rng, double sigma) {
  if (sigma <= 0.0) return 0.0;
  std::normal_distribution<double> normal(0.0, sigma);
  for (;;) {
    const double x = normal(rng);
    if (std::abs(x) <= 4.0 * sigma) return x;
  }
}

Vec3 surface_point(ShapeClass c, Rng& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  switch (c) {
    case ShapeClass::sphere: {
      std::normal_distribution<double> normal(0.0, 1.0);
      for (;;) {
        const Vec3 v{normal(rng), normal(rng), normal(rng)};
        const double r = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        if (r > 1e-12) return {v[0] / r, v[1] / r, v[2] / r};
      }
    }
    case ShapeClass::cube: {
      const int face = std::min(5, static_cast<int>(uni(rng) * 6.0));
      const double a = 2.0 * uni(rng) - 1.0, b = 2.0 * uni(rng) - 1.0;
      const double s = face % 2 == 0 ? 1.0 : -1.0;
      switch (face / 2) {
        case 0: return {s, a, b};
        case 1: return {a, s, b};
        default: return {a, b, s};
      }
    }
    case ShapeClass::cylinder: {
      // radius 1, z in [-1, 1]: side area 4 pi, each cap pi.
      const double pick = uni(rng) * 6.0;
      const double t = 2.0 * kPi * uni(rng);
      if (pick < 4.0) return {std::cos(t), std::sin(t), 2.0 * uni(rng) - 1.0};
      const double r = std::sqrt(uni(rng));
      return {r * std::cos(t), r * std::sin(t), pick < 5.0 ? 1.0 : -1.0};
    }
    case ShapeClass::cone: {
      // apex (0,0,1), base radius 1 at z = -1: side area pi sqrt(5), base pi.
      const double side = std::sqrt(5.0);
      const double t = 2.0 * kPi * uni(rng);
      const double r = std::sqrt(uni(rng));
      if (uni(rng) * (side + 1.0) < side) return {r * std::cos(t), r * std::sin(t), 1.0 - 2.0 * r};
      return {r * std::cos(t), r * std::sin(t), -1.0};
    }
    case ShapeClass::torus: {
      // R = 1, r = 0.35; tube angle accepted with probability (R + r cos v) / (R + r).
      constexpr double big = 1.0, small = 0.35;
      for (;;) {
        const double u = 2.0 * kPi * uni(rng), v = 2.0 * kPi * uni(rng);
        if (uni(rng) * (big + small) <= big + small * std::cos(v)) {
          const double w = big + small * std::cos(v);
          return {w * std::cos(u), w * std::sin(u), small * std::sin(v)};
        }
      }
    }
    case ShapeClass::plane: return {2.0 * uni(rng) - 1.0, 2.0 * uni(rng) - 1.0, 0.0};
  }
  return {};
}

Vec3 centroid(std::span<const Vec3> pts) {
  Vec3 c{0.0, 0.0, 0.0};
  for (const auto& p : pts) {
    for (int r = 0; r < 3; ++r) c[r] += p[r];
  }
  for (auto& x : c) x /= static_cast<double>(pts.size());
  return c;
}

double max_radius(std::span<const Vec3> pts, const Vec3& c) {
  double r = 0.0;
  for (const auto& p : pts) r = std::max(r, std::sqrt(geom::squared_distance(p, c)));
  return r;
}

std::string line_error(const fs::path& path, std::size_t line, const std::string& what) {
  return path.string() + ", line " + std::to_string(line) + ": " + what;
}

// Splits on whitespace.
std::vector<std::string_view> fields_of(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

double parse_coordinate(std::string_view field, const fs::path& path, std::size_t line) {
  double v = 0.0;
  const auto* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    fail(ErrorKind::parse, line_error(path, line, "'" + std::string(field) + "' is not a number"));
  }
  if (!std::isfinite(v)) fail(ErrorKind::value, line_error(path, line, "non-finite coordinate"));
  return v;
}

std::size_t parse_count(std::string_view field, const fs::path& path, std::size_t line) {
  std::size_t v = 0;
  const auto* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    fail(ErrorKind::parse, line_error(path, line, "'" + std::string(field) + "' is not a count"));
  }
  return v;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

void append_number(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::io, "write failed for " + path.string());
}

}  // namespace

std::span<const std::string_view> shape_class_names() { return kNames; }

std::string_view to_string(ShapeClass c) { return kNames[static_cast<std::size_t>(c)]; }

ShapeClass shape_class_from_string(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kNames); ++i) {
    if (kNames[i] == name) return static_cast<ShapeClass>(i);
  }
  fail(ErrorKind::shape_class, "unknown shape class '" + std::string(name) + "'");
}

PointCloud generate_shape(ShapeClass c, std::size_t n, std::uint64_t seed, double jitter) {
  if (n < 8) fail(ErrorKind::count, "generate_shape needs at least 8 points, got " + std::to_string(n));
  Rng rng = make_rng(seed, "shape", static_cast<std::uint64_t>(c));
  PointCloud cloud;
  cloud.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 p = surface_point(c, rng);
    for (auto& x : p) x += truncated_normal(rng, jitter);
    cloud.points.push_back(p);
  }
  cloud.label = static_cast<std::size_t>(c);
  return cloud;
}

PointCloud normalize(const PointCloud& cloud) {
  if (cloud.points.empty()) fail(ErrorKind::degeneracy, "cannot normalize an empty cloud");
  const Vec3 c = centroid(cloud.points);
  const double r = max_radius(cloud.points, c);
  if (!(r > 0.0)) fail(ErrorKind::degeneracy, "all points coincide");
  PointCloud out = cloud;
  for (auto& p : out.points) {
    for (int k = 0; k < 3; ++k) p[k] = (p[k] - c[k]) / r;
  }
  return out;
}

PointCloud compose_background(const PointCloud& fg, const PointCloud& donor, std::size_t n_bg,
                              std::uint64_t seed) {
  if (fg.label && donor.label && *fg.label == *donor.label) {
    fail(ErrorKind::label, "background donor shares the foreground label " + std::to_string(*fg.label));
  }
  if (donor.size() < n_bg) {
    fail(ErrorKind::count, "donor has " + std::to_string(donor.size()) + " points, background needs " +
                               std::to_string(n_bg));
  }
  if (n_bg < 2 || fg.size() < 2) fail(ErrorKind::count, "foreground and background need at least 2 points");
  Rng rng = make_rng(seed, "background");
  std::vector<std::size_t> idx(donor.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<Vec3> bg;
  for (std::size_t i = 0; i < n_bg; ++i) bg.push_back(donor.points[idx[i]]);

  const Vec3 cb = centroid(bg);
  const double scale = geom::mean_nn_distance(fg.points) / geom::mean_nn_distance(bg);
  for (auto& p : bg) {
    for (int k = 0; k < 3; ++k) p[k] = (p[k] - cb[k]) * scale;
  }
  const Vec3 cf = centroid(fg.points);
  const double r_fg = max_radius(fg.points, cf);
  const double r_bg = max_radius(bg, Vec3{0.0, 0.0, 0.0});

  std::normal_distribution<double> normal(0.0, 1.0);
  Vec3 dir{};
  double len = 0.0;
  while (len < 1e-12) {
    dir = {normal(rng), normal(rng), normal(rng)};
    len = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
  }
  std::uniform_real_distribution<double> shell(1.2, 2.0);
  const double dist = shell(rng) * r_fg + r_bg;

  PointCloud out = fg;
  out.fg_mask = std::vector<bool>(fg.size(), true);
  for (const auto& p : bg) {
    out.points.push_back({cf[0] + dir[0] / len * dist + p[0], cf[1] + dir[1] / len * dist + p[1],
                          cf[2] + dir[2] / len * dist + p[2]});
    out.fg_mask->push_back(false);
  }
  return out;
}

PointCloud load_xyz(const fs::path& path) {
  const auto lines = read_lines(path);
  PointCloud cloud;
  std::vector<bool> mask;
  std::size_t columns = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto f = fields_of(lines[i]);
    if (f.empty()) continue;
    const std::size_t line = i + 1;
    if (f.size() != 3 && f.size() != 4) {
      fail(ErrorKind::parse, line_error(path, line, "expected 3 or 4 fields, got " + std::to_string(f.size())));
    }
    if (columns == 0) columns = f.size();
    if (f.size() != columns) fail(ErrorKind::parse, line_error(path, line, "inconsistent column count"));
    Vec3 p{};
    for (int k = 0; k < 3; ++k) p[k] = parse_coordinate(f[k], path, line);
    cloud.points.push_back(p);
    if (columns == 4) {
      if (f[3] != "0" && f[3] != "1") fail(ErrorKind::parse, line_error(path, line, "mask must be 0 or 1"));
      mask.push_back(f[3] == "1");
    }
  }
  if (cloud.points.empty()) fail(ErrorKind::parse, path.string() + ": no points");
  if (columns == 4) cloud.fg_mask = std::move(mask);
  return cloud;
}

PointCloud load_off(const fs::path& path) {
  const auto lines = read_lines(path);
  std::size_t i = 0;
  auto next_content = [&]() -> std::vector<std::string_view> {
    while (i < lines.size()) {
      const auto f = fields_of(lines[i++]);
      if (!f.empty() && f.front().front() != '#') return f;
    }
    return {};
  };
  auto header = next_content();
  if (header.empty() || header.front().substr(0, 3) != "OFF") {
    fail(ErrorKind::parse, line_error(path, i == 0 ? 1 : i, "missing OFF header"));
  }
  std::vector<std::string_view> counts;
  if (header.front().size() > 3) {
    // "OFF8 6 0" style: counts glued to the keyword.
    counts.push_back(header.front().substr(3));
    counts.insert(counts.end(), header.begin() + 1, header.end());
  } else if (header.size() > 1) {
    counts.assign(header.begin() + 1, header.end());
  } else {
    counts = next_content();
  }
  if (counts.size() < 2) fail(ErrorKind::parse, line_error(path, i, "expected vertex and face counts"));
  const std::size_t nv = parse_count(counts[0], path, i);
  parse_count(counts[1], path, i);
  PointCloud cloud;
  for (std::size_t v = 0; v < nv; ++v) {
    const auto f = next_content();
    if (f.empty()) fail(ErrorKind::parse, line_error(path, lines.size(), "file ends before vertex " + std::to_string(v)));
    if (f.size() < 3) fail(ErrorKind::parse, line_error(path, i, "vertex needs 3 coordinates"));
    Vec3 p{};
    for (int k = 0; k < 3; ++k) p[k] = parse_coordinate(f[k], path, i);
    cloud.points.push_back(p);
  }
  if (cloud.points.empty()) fail(ErrorKind::parse, path.string() + ": no vertices");
  return cloud;
}

PointCloud load_cloud(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (ext == ".off") return load_off(path);
  return load_xyz(path);
}

std::string to_xyz(const PointCloud& cloud) {
  std::string out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      if (k > 0) out += ' ';
      append_number(out, cloud.points[i][k]);
    }
    if (cloud.fg_mask) out += (*cloud.fg_mask)[i] ? " 1" : " 0";
    out += '\n';
  }
  return out;
}

void write_xyz(const PointCloud& cloud, const fs::path& path) { write_text(path, to_xyz(cloud)); }

std::string manifest_json(const DatasetManifest& m) {
  auto entries = [](const std::vector<ManifestEntry>& list) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& e : list) a.push_back({{"file", e.file}, {"label", e.label}, {"bg", e.background}});
    return a;
  };
  nlohmann::json j{{"root", m.root},
                   {"classes", m.classes},
                   {"splits", {{"train", entries(m.train)}, {"test", entries(m.test)}}},
                   {"seed", m.seed},
                   {"version", m.version}};
  return j.dump(2) + "\n";
}

GeneratedDataset generate_dataset(const DatasetConfig& config) {
  GeneratedDataset d;
  if (config.classes.empty()) {
    for (auto n : kNames) d.classes.emplace_back(n);
  } else {
    d.classes = config.classes;
  }
  if (d.classes.size() < 2) fail(ErrorKind::config, "dataset needs at least 2 classes");
  std::vector<ShapeClass> shapes;
  for (const auto& name : d.classes) shapes.push_back(shape_class_from_string(name));

  const std::size_t classes = shapes.size();
  std::uint64_t serial = 0;
  for (const bool is_train : {true, false}) {
    const std::size_t per_class = is_train ? config.train_per_class : config.test_per_class;
    auto& list = is_train ? d.train : d.test;
    for (std::size_t label = 0; label < classes; ++label) {
      for (std::size_t k = 0; k < per_class; ++k, ++serial) {
        PointCloud cloud = normalize(generate_shape(shapes[label], config.points,
                                                    derive_seed(config.seed, "cloud", serial), config.jitter));
        cloud.label = label;
        if (config.background) {
          const std::size_t donor_label = (label + 1) % classes;
          PointCloud donor = normalize(generate_shape(shapes[donor_label],
                                                      std::max(config.points, config.background_points),
                                                      derive_seed(config.seed, "donor", serial), config.jitter));
          donor.label = donor_label;
          cloud = compose_background(cloud, donor, config.background_points,
                                     derive_seed(config.seed, "compose", serial));
        }
        list.push_back(std::move(cloud));
      }
    }
  }
  return d;
}

DatasetManifest build_dataset(const DatasetConfig& config, const fs::path& root) {
  const GeneratedDataset d = generate_dataset(config);
  DatasetManifest m;
  m.root = root.string();
  m.seed = config.seed;
  m.classes = d.classes;

  std::error_code ec;
  for (const char* split : {"train", "test"}) {
    fs::create_directories(root / split, ec);
    if (ec) fail(ErrorKind::io, "cannot create " + (root / split).string() + ": " + ec.message());
  }
  for (const bool is_train : {true, false}) {
    const char* split = is_train ? "train" : "test";
    const auto& clouds = is_train ? d.train : d.test;
    auto& list = is_train ? m.train : m.test;
    std::vector<std::size_t> ordinal(d.classes.size(), 0);
    for (const auto& cloud : clouds) {
      const std::size_t label = *cloud.label;
      const std::string file =
          std::string(split) + "/" + m.classes[label] + "_" + std::to_string(ordinal[label]++) + ".xyz";
      write_xyz(cloud, root / file);
      list.push_back({file, label, config.background});
    }
  }
  write_text(root / "manifest.json", manifest_json(m));
  return m;
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot read manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  DatasetManifest m;
  try {
    const auto j = nlohmann::json::parse(ss.str());
    m.root = j.value("root", std::string{});
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.seed = j.value("seed", std::uint64_t{0});
    m.version = j.value("version", 1);
    for (const char* split : {"train", "test"}) {
      auto& list = std::string_view(split) == "train" ? m.train : m.test;
      if (!j.at("splits").contains(split)) continue;
      for (const auto& e : j["splits"][split]) {
        list.push_back({e.at("file").get<std::string>(), e.at("label").get<std::size_t>(), e.value("bg", false)});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, "manifest " + path.string() + ": " + e.what());
  }
  if (m.version != 1) fail(ErrorKind::format, "unsupported manifest version " + std::to_string(m.version));
  for (const auto* list : {&m.train, &m.test}) {
    for (const auto& e : *list) {
      if (e.label >= m.classes.size()) {
        fail(ErrorKind::label, "manifest entry " + e.file + " has label " + std::to_string(e.label));
      }
    }
  }
  return m;
}

std::vector<PointCloud> load_split(const DatasetManifest& m, const fs::path& manifest_path, std::string_view split) {
  const auto* list = split == "train" ? &m.train : split == "test" ? &m.test : nullptr;
  if (list == nullptr) fail(ErrorKind::config, "unknown split '" + std::string(split) + "'");
  const fs::path base = manifest_path.parent_path();
  std::vector<PointCloud> out;
  for (const auto& e : *list) {
    const fs::path file = fs::path(e.file).is_absolute() ? fs::path(e.file) : base / e.file;
    PointCloud c = load_cloud(file);
    c.label = e.label;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace pcdiag::data
