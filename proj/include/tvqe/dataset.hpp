#pragma once

#include "tvqe/train.hpp"
#include "tvqe/yuv.hpp"

namespace tvqe {

// Spatially co-located random crops: all 2R+1 compressed frames of a clip
// window plus the raw center frame, cropped at the same offset. Draw order
// per sample is frame, row, column, so coordinates are reproducible from
// the seed alone.
template <class S>
std::vector<TrainSample<S>> sample_patches(const YuvSequence& compressed,
                                           const YuvSequence& raw, long crop,
                                           long count, long radius,
                                           std::uint64_t seed) {
  if (compressed.width != raw.width || compressed.height != raw.height ||
      compressed.frame_count != raw.frame_count)
    throw DimensionError("sample_patches: sequences are not aligned");
  if (crop < 1 || count < 0 || radius < 0)
    throw UsageError("sample_patches: crop must be >= 1, count and radius >= 0");
  if (crop > compressed.width || crop > compressed.height)
    throw UsageError("sample_patches: crop " + std::to_string(crop) +
                     " exceeds frame " + std::to_string(compressed.width) +
                     "x" + std::to_string(compressed.height));

  Rng rng(seed);
  std::vector<TrainSample<S>> out;
  const long fcount = 2 * radius + 1;
  for (long i = 0; i < count; ++i) {
    long t = rng.bounded(compressed.frame_count);
    long y = rng.bounded(compressed.height - crop + 1);
    long x = rng.bounded(compressed.width - crop + 1);

    ClipWindow<S> win = clip_window<S>(compressed, t, radius);
    TrainSample<S> s;
    s.frames = Tensor<S>({fcount, crop, crop});
    for (long f = 0; f < fcount; ++f) {
      const Tensor<S>& plane = win.frames[size_t(f)];
      for (long r = 0; r < crop; ++r)
        std::memcpy(s.frames.data() + (f * crop + r) * crop,
                    plane.data() + (y + r) * compressed.width + x,
                    size_t(crop) * sizeof(S));
    }
    Tensor<S> target = read_y_plane<S>(raw, t);
    s.target = Tensor<S>({crop, crop});
    for (long r = 0; r < crop; ++r)
      std::memcpy(s.target.data() + r * crop,
                  target.data() + (y + r) * raw.width + x,
                  size_t(crop) * sizeof(S));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace tvqe
