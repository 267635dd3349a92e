#ifndef XSTFT_DATA_HPP_
#define XSTFT_DATA_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xstft/rng.hpp"
#include "xstft/tensor.hpp"

namespace xstft {

// Raw video container: magic "XVID1", header, then per-sample records of
// (label, frame count, little-endian frames). Every record's frame count
// must equal the header's in version 1.
struct DatasetHeader {
  uint32_t version = 1;
  uint64_t samples = 0;
  uint32_t classes = 0;
  uint32_t frames = 0;
  uint32_t height = 0;
  uint32_t width = 0;
  uint32_t channels = 0;
  uint8_t dtype = 0;  // 0 = u8, 1 = f32
};

struct Dataset {
  DatasetHeader header;
  std::vector<uint32_t> labels;
  std::vector<std::vector<uint8_t>> payload;  // raw bytes per sample

  int64_t frame_values() const {
    return static_cast<int64_t>(header.channels) * header.height * header.width;
  }
  // Pixel in [0,1] at (sample, frame, channel, y, x).
  double value(int64_t s, int64_t f, int64_t c, int64_t y, int64_t x) const;
};

void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

// Synthetic 4-class direction task: a bright square moves up, down, left or
// right over an i.i.d. noisy background. Start positions are drawn uniformly
// from the same band for a direction and its reverse, so the multiset of
// frames carries no label information; only frame order does. Labels:
// 0 = up, 1 = down, 2 = left, 3 = right.
Dataset gen_direction_dataset(uint64_t seed, int64_t num_samples, int64_t frames, int64_t height,
                              int64_t width);

struct SamplingPolicy {
  int64_t frames = 16;  // clip length T
  bool train = false;   // train: one random frame per segment; eval: equi-distant
};

// Frame indices for a clip of policy.frames from a video with `available`
// frames. Shorter videos wrap cyclically (loop padding).
std::vector<int64_t> sample_frames(int64_t available, const SamplingPolicy& policy, Rng* rng);

struct AugmentChoice {
  double scale = 1.0;
  int position = 4;  // 0..3 corners, 4 center
  bool flip = false;
};

extern const double kScaleSet[4];

AugmentChoice draw_augment(Rng& rng, bool multiscale, bool flip_enabled);

// Direction labels under a horizontal flip: up/down unaffected, left/right
// swapped.
int flip_label_remap(int label);

// Multi-scale crop at the chosen position, bilinear resize to (out_h, out_w),
// optional horizontal flip applied to all frames of the clip.
template <class S>
Tensor<S> apply_augment(const Tensor<S>& clip, const AugmentChoice& choice, int64_t out_h, int64_t out_w);

// Center square crop + resize; the inference-time transform.
template <class S>
Tensor<S> center_crop_resize(const Tensor<S>& clip, int64_t out_h, int64_t out_w);

// Decoded clip [c, T, h, w] with values in [0,1], frames selected by index.
template <class S>
Tensor<S> load_clip(const Dataset& ds, int64_t sample, std::span<const int64_t> frame_indices);

// Full pipeline for a batch: frame sampling, optional augmentation, label
// remap (left<->right) when a flip is drawn. Per-sample RNG streams are
// derived from (seed, epoch, sample index), so batch composition never
// depends on evaluation order.
template <class S>
Tensor<S> assemble_batch(const Dataset& ds, std::span<const int64_t> samples, int64_t frames, bool train_mode,
                         bool multiscale, bool flip_enabled, uint64_t seed, uint64_t epoch, int64_t out_h,
                         int64_t out_w, std::vector<int>* labels_out);

}  // namespace xstft

#endif  // XSTFT_DATA_HPP_
