#include "detkit/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "detkit/format.hpp"
#include "detkit/rng.hpp"

namespace detkit::dataset {

namespace fs = std::filesystem;

std::pair<int, geom::Box> parse_label_line(const std::string& line) {
  std::istringstream fields(line);
  long category = 0;
  geom::Box box;
  std::string extra;
  if (!(fields >> category >> box.cx >> box.cy >> box.w >> box.h) ||
      (fields >> extra))
    throw std::runtime_error("expected 'category cx cy w h'");
  if (category < 0) throw std::runtime_error("category_id must be >= 0");
  for (double v : {box.cx, box.cy, box.w, box.h})
    if (v < 0.0 || v > 1.0)
      throw std::runtime_error("coordinate outside [0, 1]");
  if (box.w <= 0.0 || box.h <= 0.0)
    throw std::runtime_error("box sizes must be positive");
  return {static_cast<int>(category), box};
}

std::string format_label_line(int category_id, const geom::Box& box) {
  return std::to_string(category_id) + ' ' + format_double(box.cx) + ' ' +
         format_double(box.cy) + ' ' + format_double(box.w) + ' ' +
         format_double(box.h);
}

std::vector<LabeledImage> load_dataset(const fs::path& labels_dir) {
  if (!fs::is_directory(labels_dir))
    throw std::runtime_error("labels directory not found: " + labels_dir.string());

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(labels_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".txt")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::vector<LabeledImage> images;
  std::vector<std::string> errors;
  for (const auto& file : files) {
    LabeledImage image;
    image.image_id = file.stem().string();
    std::ifstream in(file);
    if (!in) {
      errors.push_back(file.string() + ": unreadable");
      continue;
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        auto [category, box] = parse_label_line(line);
        image.annotations.push_back({category, box});
      } catch (const std::exception& e) {
        errors.push_back(file.string() + ":" + std::to_string(line_no) + ": " +
                         e.what());
      }
    }
    images.push_back(std::move(image));
  }

  // fail closed: a partial dataset would corrupt the per-category counts
  if (!errors.empty()) {
    std::string report = "label load failed:";
    for (const auto& e : errors) report += "\n  " + e;
    throw std::runtime_error(report);
  }
  return images;
}

void write_labeled_image(const fs::path& labels_dir, const LabeledImage& image) {
  std::ofstream out(labels_dir / (image.image_id + ".txt"));
  if (!out)
    throw std::runtime_error("cannot write label file for " + image.image_id);
  for (const auto& a : image.annotations)
    out << format_label_line(a.category_id, a.box) << '\n';
}

std::pair<std::vector<LabeledImage>, std::vector<LabeledImage>> split_train_val(
    std::span<const LabeledImage> images, unsigned ratio_train,
    unsigned ratio_val, std::uint64_t seed) {
  if (images.empty())
    throw std::invalid_argument("split_train_val: empty dataset");
  if (ratio_train == 0 || ratio_val == 0)
    throw std::invalid_argument("split_train_val: ratios must be positive");

  std::vector<std::size_t> order(images.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.index(i)]);

  const std::size_t train_count =
      images.size() * ratio_train / (ratio_train + ratio_val);
  std::pair<std::vector<LabeledImage>, std::vector<LabeledImage>> split;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < train_count ? split.first : split.second).push_back(images[order[i]]);
  return split;
}

DatasetSummary summarize(std::span<const LabeledImage> images) {
  DatasetSummary s;
  s.image_count = images.size();
  for (const auto& image : images) {
    s.total_instances += image.annotations.size();
    for (const auto& a : image.annotations) ++s.instances_per_category[a.category_id];
  }
  s.mean_annotations_per_image =
      s.image_count == 0 ? 0.0
                         : static_cast<double>(s.total_instances) /
                               static_cast<double>(s.image_count);
  return s;
}

std::map<int, double> category_weights(const DatasetSummary& summary,
                                       bool normalize) {
  std::map<int, double> weights;
  for (const auto& [cat, count] : summary.instances_per_category) {
    if (count == 0)
      throw std::runtime_error("category " + std::to_string(cat) +
                               " has no instances; weight undefined");
    weights[cat] = 1.0 / static_cast<double>(count);
  }
  if (normalize && !weights.empty()) {
    double sum = 0.0;
    for (const auto& [cat, w] : weights) sum += w;
    const double scale = static_cast<double>(weights.size()) / sum;
    for (auto& [cat, w] : weights) w *= scale;
  }
  return weights;
}

std::string summary_report(const DatasetSummary& summary) {
  std::ostringstream out;
  out << "images " << summary.image_count << '\n';
  out << "instances_total " << summary.total_instances << '\n';
  out << "mean_annotations_per_image "
      << format_double(summary.mean_annotations_per_image) << '\n';
  out << "category_id,count,weight_raw,weight_normalized\n";
  if (!summary.instances_per_category.empty()) {
    const auto raw = category_weights(summary, false);
    const auto norm = category_weights(summary, true);
    for (const auto& [cat, count] : summary.instances_per_category)
      out << cat << ',' << count << ',' << format_double(raw.at(cat)) << ','
          << format_double(norm.at(cat)) << '\n';
  }
  return out.str();
}

std::vector<LabeledImage> generate_minidata(const fs::path& out_dir,
                                            const MiniDataOptions& options) {
  if (options.images == 0 || options.categories == 0)
    throw std::invalid_argument("gen-minidata: images and categories must be positive");

  Rng rng(options.seed);
  // skewed category draw: weight c+1 favours low ids, so counts stay imbalanced
  std::vector<double> cumulative;
  double total_weight = 0.0;
  for (std::size_t c = options.categories; c > 0; --c) {
    total_weight += static_cast<double>(c * c);
    cumulative.push_back(total_weight);
  }

  std::vector<LabeledImage> images;
  images.reserve(options.images);
  for (std::size_t i = 0; i < options.images; ++i) {
    LabeledImage image;
    char name[32];
    std::snprintf(name, sizeof(name), "img_%04zu", i);
    image.image_id = name;
    const long n = rng.integer(2, 7);
    for (long a = 0; a < n; ++a) {
      const double pick = rng.uniform(0.0, total_weight);
      std::size_t category = 0;
      while (category + 1 < cumulative.size() && pick >= cumulative[category])
        ++category;
      geom::Box box;
      box.w = rng.uniform(0.05, 0.3);
      box.h = rng.uniform(0.05, 0.3);
      box.cx = rng.uniform(0.2, 0.8);
      box.cy = rng.uniform(0.2, 0.8);
      image.annotations.push_back({static_cast<int>(category), box});
    }
    images.push_back(std::move(image));
  }

  const fs::path labels = out_dir / "labels";
  fs::create_directories(labels);
  for (const auto& image : images) write_labeled_image(labels, image);

  std::ofstream manifest(out_dir / "manifest.txt");
  if (!manifest) throw std::runtime_error("cannot write manifest");
  manifest << summary_report(summarize(images));
  return images;
}

}  // namespace detkit::dataset
