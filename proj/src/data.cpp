#include "xstft/data.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace xstft {

static_assert(std::endian::native == std::endian::little, "dataset format assumes a little-endian host");

namespace {

constexpr char kMagic[5] = {'X', 'V', 'I', 'D', '1'};
constexpr uint64_t kTagSample = 2;
constexpr uint64_t kTagAug = 4;

constexpr int64_t kSquareSize = 4;
constexpr int64_t kSquareValue = 230;
constexpr int64_t kNoiseCeil = 50;
// Static squares of the same brightness, fixed for the whole clip. A single
// frame cannot tell them from the mover, so direction (and even the motion
// axis) is only recoverable from frame-to-frame change; the non-trainable
// temporal transform rejects them outright as zero-frequency content.
constexpr int64_t kDistractors = 10;

size_t dtype_size(uint8_t dtype) {
  if (dtype == 0) return 1;
  if (dtype == 1) return 4;
  throw IoError("unknown dataset dtype code " + std::to_string(dtype));
}

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated dataset file");
  return v;
}

}  // namespace

const double kScaleSet[4] = {1.0, std::pow(2.0, -0.25), std::pow(2.0, -0.75), 0.5};

double Dataset::value(int64_t s, int64_t f, int64_t c, int64_t y, int64_t x) const {
  const int64_t idx =
      ((f * header.channels + c) * static_cast<int64_t>(header.height) + y) * static_cast<int64_t>(header.width) +
      x;
  const auto& raw = payload[static_cast<size_t>(s)];
  if (header.dtype == 0) return static_cast<double>(raw[static_cast<size_t>(idx)]) / 255.0;
  float v;
  std::memcpy(&v, raw.data() + static_cast<size_t>(idx) * 4, 4);
  return static_cast<double>(v);
}

void write_dataset(const std::string& path, const Dataset& ds) {
  XSTFT_CHECK(ds.labels.size() == ds.payload.size() && ds.labels.size() == ds.header.samples,
              "dataset header count does not match payload");
  const size_t frame_bytes = static_cast<size_t>(ds.header.frames) * static_cast<size_t>(ds.header.channels) *
                             ds.header.height * ds.header.width * dtype_size(ds.header.dtype);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open dataset for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  put<uint32_t>(os, ds.header.version);
  put<uint64_t>(os, ds.header.samples);
  put<uint32_t>(os, ds.header.classes);
  put<uint32_t>(os, ds.header.frames);
  put<uint32_t>(os, ds.header.height);
  put<uint32_t>(os, ds.header.width);
  put<uint32_t>(os, ds.header.channels);
  put<uint8_t>(os, ds.header.dtype);
  for (size_t i = 0; i < ds.payload.size(); ++i) {
    XSTFT_CHECK(ds.labels[i] < ds.header.classes, "label out of range");
    XSTFT_CHECK(ds.payload[i].size() == frame_bytes, "sample payload size mismatch");
    put<uint32_t>(os, ds.labels[i]);
    put<uint32_t>(os, ds.header.frames);
    os.write(reinterpret_cast<const char*>(ds.payload[i].data()),
             static_cast<std::streamsize>(ds.payload[i].size()));
  }
  if (!os) throw IoError("failed writing dataset: " + path);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open dataset: " + path);
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, kMagic, 5) != 0) throw IoError("not a dataset file: " + path);
  Dataset ds;
  ds.header.version = get<uint32_t>(is);
  if (ds.header.version != 1) throw IoError("unsupported dataset version");
  ds.header.samples = get<uint64_t>(is);
  ds.header.classes = get<uint32_t>(is);
  ds.header.frames = get<uint32_t>(is);
  ds.header.height = get<uint32_t>(is);
  ds.header.width = get<uint32_t>(is);
  ds.header.channels = get<uint32_t>(is);
  ds.header.dtype = get<uint8_t>(is);
  const size_t frame_bytes = static_cast<size_t>(ds.header.frames) * static_cast<size_t>(ds.header.channels) *
                             ds.header.height * ds.header.width * dtype_size(ds.header.dtype);
  for (uint64_t i = 0; i < ds.header.samples; ++i) {
    const uint32_t label = get<uint32_t>(is);
    const uint32_t frames = get<uint32_t>(is);
    if (label >= ds.header.classes) throw IoError("dataset label out of range");
    if (frames != ds.header.frames) throw IoError("record frame count differs from header");
    std::vector<uint8_t> raw(frame_bytes);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(frame_bytes));
    if (!is) throw IoError("truncated dataset file");
    ds.labels.push_back(label);
    ds.payload.push_back(std::move(raw));
  }
  return ds;
}

Dataset gen_direction_dataset(uint64_t seed, int64_t num_samples, int64_t frames, int64_t height,
                              int64_t width) {
  XSTFT_CHECK(height >= 16 && width >= 16, "frame geometry must be at least 16x16");
  XSTFT_CHECK(frames >= 8, "need at least 8 frames");
  const int64_t extent = (frames - 1) + kSquareSize;  // motion span plus the square
  const int64_t m_v = std::min<int64_t>(5, (height - extent) / 2);
  const int64_t m_h = std::min<int64_t>(5, (width - extent) / 2);
  XSTFT_CHECK(m_v >= 1 && m_h >= 1, "geometry too small for motion extent");
  const int64_t cross_m = 5;

  Dataset ds;
  ds.header.samples = static_cast<uint64_t>(num_samples);
  ds.header.classes = 4;
  ds.header.frames = static_cast<uint32_t>(frames);
  ds.header.height = static_cast<uint32_t>(height);
  ds.header.width = static_cast<uint32_t>(width);
  ds.header.channels = 3;
  ds.header.dtype = 0;

  const int64_t hw = height * width;
  for (int64_t s = 0; s < num_samples; ++s) {
    Rng rng = Rng::stream(seed, kTagSample, static_cast<uint64_t>(s));
    const uint32_t label = static_cast<uint32_t>(rng.next_below(4));
    const bool vertical = label < 2;
    // The moving axis start is drawn from one band shared by a direction and
    // its reverse; the cross axis is free within its margins.
    const int64_t band_lo = vertical ? m_v : m_h;
    const int64_t band_count = (vertical ? height : width) - 2 * band_lo - extent + 1;
    const int64_t band = band_lo + static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(band_count)));
    const int64_t cross_len = vertical ? width : height;
    const int64_t cross_count = cross_len - 2 * cross_m - kSquareSize + 1;
    const int64_t cross = cross_m + static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(cross_count)));

    // clip-static distractor squares
    std::vector<std::pair<int64_t, int64_t>> distractors;
    for (int64_t d = 0; d < kDistractors; ++d)
      distractors.push_back(
          {1 + static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(height - kSquareSize - 1))),
           1 + static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(width - kSquareSize - 1)))});

    const auto paint = [&](uint8_t* plane, int64_t y0, int64_t x0) {
      for (int64_t dy = 0; dy < kSquareSize; ++dy)
        for (int64_t dx = 0; dx < kSquareSize; ++dx)
          plane[static_cast<size_t>((y0 + dy) * width + (x0 + dx))] = static_cast<uint8_t>(kSquareValue);
    };

    std::vector<uint8_t> raw(static_cast<size_t>(frames * 3 * hw));
    for (int64_t f = 0; f < frames; ++f) {
      // noise background, per pixel per channel
      for (int64_t c = 0; c < 3; ++c) {
        uint8_t* plane = raw.data() + static_cast<size_t>((f * 3 + c) * hw);
        for (int64_t i = 0; i < hw; ++i)
          plane[static_cast<size_t>(i)] = static_cast<uint8_t>(rng.next_below(kNoiseCeil));
      }
      // moving square position at this frame
      const int64_t step = label == 0 || label == 2 ? (frames - 1 - f) : f;  // up/left run backward
      const int64_t y0 = vertical ? band + step : cross;
      const int64_t x0 = vertical ? cross : band + step;
      for (int64_t c = 0; c < 3; ++c) {
        uint8_t* plane = raw.data() + static_cast<size_t>((f * 3 + c) * hw);
        for (const auto& [dy, dx] : distractors) paint(plane, dy, dx);
        paint(plane, y0, x0);
      }
    }
    ds.labels.push_back(label);
    ds.payload.push_back(std::move(raw));
  }
  return ds;
}

std::vector<int64_t> sample_frames(int64_t available, const SamplingPolicy& policy, Rng* rng) {
  XSTFT_CHECK(available >= 1, "empty video");
  XSTFT_CHECK(policy.frames >= 1, "clip length must be >= 1");
  const int64_t T = policy.frames;
  std::vector<int64_t> idx(static_cast<size_t>(T));
  if (available < T) {
    // loop padding: wrap cyclically after exhaustion
    for (int64_t i = 0; i < T; ++i) idx[static_cast<size_t>(i)] = i % available;
    return idx;
  }
  if (!policy.train) {
    for (int64_t i = 0; i < T; ++i) idx[static_cast<size_t>(i)] = i * available / T;
    return idx;
  }
  XSTFT_CHECK(rng != nullptr, "train-mode sampling needs an rng");
  for (int64_t i = 0; i < T; ++i) {
    const int64_t lo = i * available / T;
    const int64_t hi = (i + 1) * available / T;  // exclusive, never empty for available >= T
    idx[static_cast<size_t>(i)] = lo + static_cast<int64_t>(rng->next_below(static_cast<uint64_t>(hi - lo)));
  }
  return idx;
}

int flip_label_remap(int label) {
  if (label == 2) return 3;
  if (label == 3) return 2;
  return label;
}

AugmentChoice draw_augment(Rng& rng, bool multiscale, bool flip_enabled) {
  AugmentChoice c;
  if (multiscale) {
    c.scale = kScaleSet[rng.next_below(4)];
    c.position = static_cast<int>(rng.next_below(5));
  }
  if (flip_enabled) c.flip = rng.next_below(2) == 1;
  return c;
}

namespace {

// Bilinear sample of one plane at fractional (y, x).
template <class S>
S bilinear(const S* plane, int64_t h, int64_t w, double y, double x) {
  const int64_t y0 = std::min<int64_t>(static_cast<int64_t>(y), h - 1);
  const int64_t x0 = std::min<int64_t>(static_cast<int64_t>(x), w - 1);
  const int64_t y1 = std::min<int64_t>(y0 + 1, h - 1);
  const int64_t x1 = std::min<int64_t>(x0 + 1, w - 1);
  const double fy = y - static_cast<double>(y0);
  const double fx = x - static_cast<double>(x0);
  const double v00 = plane[y0 * w + x0], v01 = plane[y0 * w + x1];
  const double v10 = plane[y1 * w + x0], v11 = plane[y1 * w + x1];
  return static_cast<S>((1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11));
}

template <class S>
Tensor<S> crop_resize(const Tensor<S>& clip, int64_t cy, int64_t cx, int64_t side, int64_t out_h,
                      int64_t out_w, bool flip) {
  const int64_t c = clip.extent(0), T = clip.extent(1), h = clip.extent(2), w = clip.extent(3);
  XSTFT_CHECK(side >= 1 && cy >= 0 && cx >= 0 && cy + side <= h && cx + side <= w, "crop larger than frame");
  Tensor<S> out({c, T, out_h, out_w});
  const bool identity = side == out_h && side == out_w;
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t t = 0; t < T; ++t) {
      const S* src = clip.data() + (ci * T + t) * h * w;
      S* dst = out.data() + (ci * T + t) * out_h * out_w;
      for (int64_t y = 0; y < out_h; ++y)
        for (int64_t x = 0; x < out_w; ++x) {
          const int64_t ox = flip ? out_w - 1 - x : x;
          S v;
          if (identity) {
            v = src[(cy + y) * w + (cx + ox)];
          } else {
            const double sy = out_h > 1 ? static_cast<double>(side - 1) * static_cast<double>(y) /
                                              static_cast<double>(out_h - 1)
                                        : 0.0;
            const double sx = out_w > 1 ? static_cast<double>(side - 1) * static_cast<double>(ox) /
                                              static_cast<double>(out_w - 1)
                                        : 0.0;
            v = bilinear(src + cy * w + cx, side, side, sy, sx);
          }
          dst[y * out_w + x] = v;
        }
    }
  return out;
}

}  // namespace

template <class S>
Tensor<S> apply_augment(const Tensor<S>& clip, const AugmentChoice& choice, int64_t out_h, int64_t out_w) {
  XSTFT_CHECK_SHAPE(clip.rank() == 4, "clips are [c,T,h,w]");
  const int64_t h = clip.extent(2), w = clip.extent(3);
  const int64_t base = std::min(h, w);
  const int64_t side = std::max<int64_t>(1, std::llround(choice.scale * static_cast<double>(base)));
  XSTFT_CHECK(side <= base, "crop larger than frame");
  int64_t cy = 0, cx = 0;
  switch (choice.position) {
    case 0: cy = 0, cx = 0; break;
    case 1: cy = 0, cx = w - side; break;
    case 2: cy = h - side, cx = 0; break;
    case 3: cy = h - side, cx = w - side; break;
    default: cy = (h - side) / 2, cx = (w - side) / 2; break;
  }
  return crop_resize(clip, cy, cx, side, out_h, out_w, choice.flip);
}

template <class S>
Tensor<S> center_crop_resize(const Tensor<S>& clip, int64_t out_h, int64_t out_w) {
  const int64_t h = clip.extent(2), w = clip.extent(3);
  const int64_t side = std::min(h, w);
  return crop_resize(clip, (h - side) / 2, (w - side) / 2, side, out_h, out_w, false);
}

template <class S>
Tensor<S> load_clip(const Dataset& ds, int64_t sample, std::span<const int64_t> frame_indices) {
  const int64_t c = ds.header.channels, h = ds.header.height, w = ds.header.width;
  const int64_t T = static_cast<int64_t>(frame_indices.size());
  Tensor<S> clip({c, T, h, w});
  const auto& raw = ds.payload[static_cast<size_t>(sample)];
  const int64_t hw = h * w;
  for (int64_t t = 0; t < T; ++t) {
    const int64_t f = frame_indices[static_cast<size_t>(t)];
    XSTFT_CHECK(f >= 0 && f < static_cast<int64_t>(ds.header.frames), "frame index out of range");
    for (int64_t ci = 0; ci < c; ++ci) {
      S* dst = clip.data() + (ci * T + t) * hw;
      if (ds.header.dtype == 0) {
        const uint8_t* src = raw.data() + static_cast<size_t>((f * c + ci) * hw);
        for (int64_t i = 0; i < hw; ++i) dst[i] = static_cast<S>(src[i]) / S(255);
      } else {
        const uint8_t* src = raw.data() + static_cast<size_t>((f * c + ci) * hw) * 4;
        for (int64_t i = 0; i < hw; ++i) {
          float v;
          std::memcpy(&v, src + static_cast<size_t>(i) * 4, 4);
          dst[i] = static_cast<S>(v);
        }
      }
    }
  }
  return clip;
}

template <class S>
Tensor<S> assemble_batch(const Dataset& ds, std::span<const int64_t> samples, int64_t frames, bool train_mode,
                         bool multiscale, bool flip_enabled, uint64_t seed, uint64_t epoch, int64_t out_h,
                         int64_t out_w, std::vector<int>* labels_out) {
  const int64_t b = static_cast<int64_t>(samples.size());
  XSTFT_CHECK(b >= 1, "empty batch");
  Tensor<S> batch({b, static_cast<int64_t>(ds.header.channels), frames, out_h, out_w});
  if (labels_out) labels_out->assign(static_cast<size_t>(b), 0);
  for (int64_t i = 0; i < b; ++i) {
    const int64_t s = samples[static_cast<size_t>(i)];
    Rng rng = Rng::stream(seed, kTagAug, (epoch << 32) ^ static_cast<uint64_t>(s));
    const SamplingPolicy policy{frames, train_mode};
    const auto idx = sample_frames(static_cast<int64_t>(ds.header.frames), policy, train_mode ? &rng : nullptr);
    Tensor<S> clip = load_clip<S>(ds, s, idx);
    Tensor<S> ready;
    int label = static_cast<int>(ds.labels[static_cast<size_t>(s)]);
    if (train_mode) {
      const AugmentChoice choice = draw_augment(rng, multiscale, flip_enabled);
      ready = apply_augment(clip, choice, out_h, out_w);
      if (choice.flip) label = flip_label_remap(label);
    } else {
      ready = center_crop_resize(clip, out_h, out_w);
    }
    std::memcpy(batch.data() + i * ready.size(), ready.data(),
                sizeof(S) * static_cast<size_t>(ready.size()));
    if (labels_out) (*labels_out)[static_cast<size_t>(i)] = label;
  }
  return batch;
}

#define XSTFT_INSTANTIATE_DATA(S)                                                                      \
  template Tensor<S> apply_augment<S>(const Tensor<S>&, const AugmentChoice&, int64_t, int64_t);       \
  template Tensor<S> center_crop_resize<S>(const Tensor<S>&, int64_t, int64_t);                        \
  template Tensor<S> load_clip<S>(const Dataset&, int64_t, std::span<const int64_t>);                  \
  template Tensor<S> assemble_batch<S>(const Dataset&, std::span<const int64_t>, int64_t, bool, bool,  \
                                       bool, uint64_t, uint64_t, int64_t, int64_t, std::vector<int>*);

XSTFT_INSTANTIATE_DATA(float)
XSTFT_INSTANTIATE_DATA(double)
#undef XSTFT_INSTANTIATE_DATA

}  // namespace xstft
