#ifndef UGC_PNG_IO_HPP
#define UGC_PNG_IO_HPP

#include <torch/torch.h>

#include <string>

namespace ugc {

/// Reads any PNG as 8-bit RGB, shape (H, W, 3) uint8. Throws
/// std::runtime_error on missing or undecodable files.
torch::Tensor read_png_rgb8(const std::string& path);

/// Writes an (H, W, 3) uint8 tensor as an RGB8 PNG. Output bytes depend
/// only on the pixels, so identical tensors give identical files.
void write_png_rgb8(const std::string& path, const torch::Tensor& hwc_u8);

/// uint8 (H, W, 3) -> float32 (3, H, W) in [-1, 1].
torch::Tensor to_float_chw(const torch::Tensor& hwc_u8);

/// float32 (3, H, W) in [-1, 1] -> uint8 (H, W, 3), clamped and rounded.
torch::Tensor to_u8_hwc(const torch::Tensor& chw);

}  // namespace ugc

#endif
