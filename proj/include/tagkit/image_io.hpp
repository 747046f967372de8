#ifndef TAGKIT_IMAGE_IO_HPP
#define TAGKIT_IMAGE_IO_HPP

// PNG/JPEG file and memory I/O between disk formats and the (1,3,H,W) RGB
// [0,1] tensor layout used everywhere else. Backed by OpenCV imgcodecs.

#include <cstdint>
#include <string>
#include <vector>

#include "tagkit/tensor.hpp"

namespace tagkit {

// Decodes PNG or JPEG; returns (1,3,H,W) RGB in [0,1].
Tensor load_image(const std::string& path);

// Expects (1,3,H,W); quantizes to 8-bit.
void save_png(const std::string& path, const Tensor& image);

// In-memory encode/decode through a real JPEG codec at the given quality,
// codec-default sampling. Used as the reference oracle for the differentiable
// compression proxy and nowhere in training.
Tensor jpeg_reference_roundtrip(const Tensor& image, int quality);

// Center-crop to square then resize (area-style) to size×size.
Tensor center_crop_resize(const Tensor& image, int size);

// FNV-1a 64-bit digest as lowercase hex; file variant reads raw bytes.
std::string fnv1a_hex(const void* data, std::size_t len);
std::string digest_file(const std::string& path);

}  // namespace tagkit

#endif
