#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "detkit/geometry.hpp"

namespace detkit::dataset {

struct Annotation {
  int category_id = 0;
  geom::Box box;  // normalized: every field in [0,1], w,h > 0
};

struct LabeledImage {
  std::string image_id;  // label-file stem
  std::vector<Annotation> annotations;
};

// counts, totals and the inverse-frequency weights derived from them
struct DatasetSummary {
  std::size_t image_count = 0;
  std::size_t total_instances = 0;
  double mean_annotations_per_image = 0.0;
  std::map<int, std::size_t> instances_per_category;
};

// "category cx cy w h", whitespace-separated. Throws std::runtime_error on a
// wrong field count, non-numeric field, coordinate outside [0,1], or
// non-positive size.
std::pair<int, geom::Box> parse_label_line(const std::string& line);

std::string format_label_line(int category_id, const geom::Box& box);

// One LabeledImage per .txt file, sorted by image_id. Any malformed line
// aborts the load; the error message names every offending file and line.
std::vector<LabeledImage> load_dataset(const std::filesystem::path& labels_dir);

void write_labeled_image(const std::filesystem::path& labels_dir,
                         const LabeledImage& image);

// Seeded shuffle, then split at floor(n * ratio_train / (ratio_train +
// ratio_val)). Disjoint and exhaustive; identical seed, identical split.
std::pair<std::vector<LabeledImage>, std::vector<LabeledImage>> split_train_val(
    std::span<const LabeledImage> images, unsigned ratio_train,
    unsigned ratio_val, std::uint64_t seed);

DatasetSummary summarize(std::span<const LabeledImage> images);

// Raw weight 1/n_c per category; when normalize is set, scaled so the mean
// weight over categories equals 1. Throws on a zero count.
std::map<int, double> category_weights(const DatasetSummary& summary,
                                       bool normalize);

// Data lines shared by the stats report and the mini-dataset manifest:
// scalar key-value lines followed by a per-category CSV table.
std::string summary_report(const DatasetSummary& summary);

struct MiniDataOptions {
  std::size_t images = 40;
  std::size_t categories = 3;
  std::uint64_t seed = 1;
};

// Writes labels/ (one .txt per image) and manifest.txt under out_dir;
// deliberately imbalanced category draw. Returns the generated images.
std::vector<LabeledImage> generate_minidata(const std::filesystem::path& out_dir,
                                            const MiniDataOptions& options);

}  // namespace detkit::dataset
