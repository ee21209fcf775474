#include "polyth/dataset.hpp"

#include <algorithm>
#include <numeric>

namespace polyth {

namespace fs = std::filesystem;

const char* split_name(Split s) { return kSplitDirs[static_cast<std::size_t>(s)]; }

std::optional<Split> parse_split(std::string_view name) {
  for (std::size_t i = 0; i < kSplitDirs.size(); ++i) {
    if (name == kSplitDirs[i]) return static_cast<Split>(i);
  }
  return std::nullopt;
}

std::size_t DatasetIndex::count(Split split, int label) const {
  return files[static_cast<std::size_t>(split)][static_cast<std::size_t>(label)].size();
}

std::size_t DatasetIndex::count(Split split) const {
  std::size_t n = 0;
  for (int k = 0; k < static_cast<int>(kNumClasses); ++k) n += count(split, k);
  return n;
}

std::vector<Sample> DatasetIndex::samples(Split split) const {
  std::vector<Sample> out;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    for (const auto& p : files[static_cast<std::size_t>(split)][k]) out.push_back({p, static_cast<int>(k)});
  }
  return out;
}

DatasetIndex load_dataset_index(const fs::path& root) {
  DatasetIndex index;
  index.root = root;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw DatasetError("dataset root " + root.string() + " is not a directory");
  for (std::size_t s = 0; s < kSplitDirs.size(); ++s) {
    const fs::path split_dir = root / kSplitDirs[s];
    if (!fs::is_directory(split_dir, ec)) {
      throw DatasetError(std::string("missing split directory '") + kSplitDirs[s] + "' at " + split_dir.string());
    }
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      const fs::path class_dir = split_dir / kClassDirs[k];
      auto& list = index.files[s][k];
      if (!fs::is_directory(class_dir, ec)) {
        index.warnings.push_back("missing class directory " + class_dir.string());
        continue;
      }
      for (const auto& entry : fs::directory_iterator(class_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".ppm") list.push_back(entry.path());
      }
      std::sort(list.begin(), list.end());
      if (list.empty()) index.warnings.push_back("empty class directory " + class_dir.string());
    }
  }
  return index;
}

const RawImage& ImageCache::get(const fs::path& path, std::size_t width, std::size_t height) {
  const std::string key = path.string() + "@" + std::to_string(width) + "x" + std::to_string(height);
  auto it = images_.find(key);
  if (it != images_.end()) return it->second;
  RawImage img;
  try {
    img = read_ppm(path);
  } catch (const PpmError& e) {
    throw DatasetError(std::string("cannot decode ") + path.string() + ": " + e.what());
  }
  if (img.width != width || img.height != height) img = resize_bilinear(img, width, height);
  return images_.emplace(key, std::move(img)).first->second;
}

BatchStream::BatchStream(std::vector<Sample> samples, StreamOptions opts, std::shared_ptr<ImageCache> cache)
    : samples_(std::move(samples)),
      opts_(opts),
      cache_(cache ? std::move(cache) : std::make_shared<ImageCache>()),
      rng_(opts.seed) {
  if (samples_.empty()) throw DatasetError("batch stream: no samples");
  if (opts_.batch_size == 0) throw std::invalid_argument("batch stream: batch size must be positive");
  if (opts_.augment) opts_.augment_params.validate();
  for (const Sample& s : samples_) validate_labels(std::span(&s.label, 1));
}

std::size_t BatchStream::batches_per_pass() const {
  return (samples_.size() + opts_.batch_size - 1) / opts_.batch_size;
}

void BatchStream::start_pass() {
  order_.resize(samples_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (opts_.shuffle) std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
  ++passes_;
  in_pass_ = true;
}

std::optional<Batch> BatchStream::next_in_pass() {
  if (!in_pass_) start_pass();
  if (cursor_ >= order_.size()) {
    in_pass_ = false;
    return std::nullopt;
  }
  const std::size_t begin = cursor_;
  const std::size_t end = std::min(order_.size(), begin + opts_.batch_size);
  cursor_ = end;
  return load(begin, end);
}

Batch BatchStream::next() {
  if (auto b = next_in_pass()) return std::move(*b);
  return std::move(*next_in_pass());
}

Batch BatchStream::load(std::size_t begin, std::size_t end) {
  Batch batch{Tensor({end - begin, 3, opts_.height, opts_.width}), {}};
  batch.labels.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    const Sample& s = samples_[order_[i]];
    const RawImage& img = cache_->get(s.path, opts_.width, opts_.height);
    if (opts_.augment) {
      normalize_into(augment(img, opts_.augment_params, rng_), batch.images, i - begin);
    } else {
      normalize_into(img, batch.images, i - begin);
    }
    batch.labels.push_back(s.label);
  }
  return batch;
}

}  // namespace polyth
