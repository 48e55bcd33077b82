#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pcdiag/geom.hpp"

namespace pcdiag::data {

enum class ShapeClass { sphere, cube, cylinder, cone, torus, plane };

/// Canonical class names in label order.
std::span<const std::string_view> shape_class_names();
std::string_view to_string(ShapeClass c);
/// Throws shape_class for unknown names.
ShapeClass shape_class_from_string(std::string_view name);

/// n points uniform on the class surface (unit-size parametric surface),
/// jittered (Gaussian, sigma = jitter, truncated at 4 sigma). Label = canonical
/// class index.
geom::PointCloud generate_shape(ShapeClass c, std::size_t n, std::uint64_t seed, double jitter = 0.01);

/// Centroid to the origin, farthest point to radius 1. Throws degeneracy when
/// all points coincide.
geom::PointCloud normalize(const geom::PointCloud& cloud);

/// Appends `n_bg` donor points, rescaled to the foreground's mean 1-NN spacing
/// and placed on a random direction so the gap to the foreground's bounding
/// sphere is 0.2..1.0 foreground radii. Foreground label kept; mask marks the foreground.
geom::PointCloud compose_background(const geom::PointCloud& fg, const geom::PointCloud& donor,
                                    std::size_t n_bg, std::uint64_t seed);

geom::PointCloud load_xyz(const std::filesystem::path& path);
geom::PointCloud load_off(const std::filesystem::path& path);
/// Dispatches on the extension (.xyz / .off).
geom::PointCloud load_cloud(const std::filesystem::path& path);
/// Shortest round-trip decimal form; mask as a 4th 0/1 column when present.
void write_xyz(const geom::PointCloud& cloud, const std::filesystem::path& path);
std::string to_xyz(const geom::PointCloud& cloud);

struct DatasetConfig {
  std::vector<std::string> classes;  // empty = all six
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 50;
  std::size_t points = 256;
  bool background = false;
  std::size_t background_points = 128;
  double jitter = 0.01;
  std::uint64_t seed = 0;
};

struct ManifestEntry {
  std::string file;  // relative to the manifest's directory
  std::size_t label = 0;
  bool background = false;
};

struct DatasetManifest {
  std::string root;
  std::vector<std::string> classes;
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> test;
  std::uint64_t seed = 0;
  int version = 1;
};

struct GeneratedDataset {
  std::vector<std::string> classes;
  std::vector<geom::PointCloud> train;
  std::vector<geom::PointCloud> test;
};

/// The clouds build_dataset would write, kept in memory (class-major order).
GeneratedDataset generate_dataset(const DatasetConfig& config);

/// Generates and normalizes every cloud, writes `root`/{train,test}/*.xyz and `root`/manifest.json.
DatasetManifest build_dataset(const DatasetConfig& config, const std::filesystem::path& root);

std::string manifest_json(const DatasetManifest& manifest);
/// Parses a manifest; relative files resolve against the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);
/// Loads one split ("train" or "test") with labels attached.
std::vector<geom::PointCloud> load_split(const DatasetManifest& manifest, const std::filesystem::path& manifest_path,
                                         std::string_view split);

}  // namespace pcdiag::data
