#pragma once

#include <cstdint>
#include <vector>

#include "stereo/errors.hpp"
#include "stereo/tensor.hpp"

namespace stereo {

// Plain CHW float image for the data plane (generation, augmentation,
// evaluation, file IO). Values are [0,1] for color images, pixels for
// disparity maps, {0,1} for masks.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> pix;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.f)
      : channels(c), height(h), width(w),
        pix(static_cast<size_t>(c) * h * w, fill) {}

  float& at(int c, int y, int x) {
    return pix[(static_cast<size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return pix[(static_cast<size_t>(c) * height + y) * width + x];
  }

  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  int64_t size() const { return static_cast<int64_t>(pix.size()); }
};

inline TensorPtr<float> tensor_from_image(const Image& im) {
  return Tensor<float>::from_data({im.channels, im.height, im.width}, im.pix);
}

inline Image image_from_tensor(const TensorPtr<float>& t) {
  if (t->ndim() != 3) throw ShapeError("image_from_tensor: expected C x H x W");
  Image im(t->dim(0), t->dim(1), t->dim(2));
  im.pix = t->data;
  return im;
}

}  // namespace stereo
