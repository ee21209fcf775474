#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "polyth/image.hpp"
#include "polyth/loss.hpp"

namespace polyth {

enum class Split { Train = 0, Val = 1, Test = 2 };

inline constexpr std::array<const char*, 3> kSplitDirs{"train", "val", "test"};
inline constexpr std::array<const char*, kNumClasses> kClassDirs{"0_nonplastic", "1_plastic_other", "2_polythene"};

const char* split_name(Split s);
std::optional<Split> parse_split(std::string_view name);

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Sample {
  std::filesystem::path path;
  int label = 0;
};

/// Sorted file listing of root/{train,val,test}/{class dir}/*.ppm.
struct DatasetIndex {
  std::filesystem::path root;
  std::array<std::array<std::vector<std::filesystem::path>, kNumClasses>, 3> files;
  std::vector<std::string> warnings;

  std::size_t count(Split split, int label) const;
  std::size_t count(Split split) const;
  /// Class 0 files, then class 1, then class 2, each sorted.
  std::vector<Sample> samples(Split split) const;
};

/// Throws DatasetError naming a missing split directory. Empty or missing
/// class directories are recorded as warnings.
DatasetIndex load_dataset_index(const std::filesystem::path& root);

struct Batch {
  Tensor images;  // B x 3 x H x W, normalized
  std::vector<int> labels;
};

/// Decoded-and-resized images keyed by path. Pure function of file bytes.
class ImageCache {
 public:
  const RawImage& get(const std::filesystem::path& path, std::size_t width, std::size_t height);

 private:
  std::map<std::string, RawImage> images_;
};

struct StreamOptions {
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  bool shuffle = true;
  bool augment = false;
  AugmentParams augment_params;
  std::size_t width = 224;
  std::size_t height = 224;
};

/// Batches over a list of samples. Each pass is a fresh seeded shuffle
/// (when enabled); the last batch of a pass may be short. Each image is
/// decoded, resized, optionally augmented, then normalized.
class BatchStream {
 public:
  BatchStream(std::vector<Sample> samples, StreamOptions opts, std::shared_ptr<ImageCache> cache = nullptr);

  /// Next batch of the current pass, or nullopt once the pass is exhausted
  /// (the following call starts a new pass).
  std::optional<Batch> next_in_pass();
  /// Next batch, rolling over into a new pass as needed.
  Batch next();

  std::size_t batches_per_pass() const;
  std::size_t passes_started() const { return passes_; }
  std::size_t size() const { return samples_.size(); }

 private:
  void start_pass();
  Batch load(std::size_t begin, std::size_t end);

  std::vector<Sample> samples_;
  StreamOptions opts_;
  std::shared_ptr<ImageCache> cache_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t passes_ = 0;
  bool in_pass_ = false;
};

}  // namespace polyth
