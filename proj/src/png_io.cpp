#include "ugc/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <stdexcept>
#include <vector>

namespace ugc {

torch::Tensor read_png_rgb8(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("cannot open PNG for reading: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error("libpng initialization failed");
  }

  torch::Tensor out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error("failed to decode PNG: " + path);
  }

  png_init_io(png, fp);
  png_read_info(png, info);

  png_uint_32 width = png_get_image_width(png, info);
  png_uint_32 height = png_get_image_height(png, info);
  int color_type = png_get_color_type(png, info);
  int bit_depth = png_get_bit_depth(png, info);

  // Normalize every input variant to 8-bit RGB.
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (color_type & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
    png_set_strip_alpha(png);
  png_read_update_info(png, info);

  out = torch::empty({static_cast<int64_t>(height), static_cast<int64_t>(width), 3}, torch::kUInt8);
  uint8_t* base = out.data_ptr<uint8_t>();
  rows.resize(height);
  for (png_uint_32 r = 0; r < height; ++r) rows[r] = base + static_cast<size_t>(r) * width * 3;
  png_read_image(png, rows.data());

  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return out;
}

void write_png_rgb8(const std::string& path, const torch::Tensor& hwc_u8) {
  TORCH_CHECK(hwc_u8.dim() == 3 && hwc_u8.size(2) == 3 && hwc_u8.dtype() == torch::kUInt8,
              "write_png_rgb8 expects (H, W, 3) uint8");
  torch::Tensor img = hwc_u8.contiguous();
  const auto height = static_cast<png_uint_32>(img.size(0));
  const auto width = static_cast<png_uint_32>(img.size(1));

  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot open PNG for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("libpng initialization failed");
  }

  std::vector<png_bytep> rows(height);
  uint8_t* base = img.data_ptr<uint8_t>();
  for (png_uint_32 r = 0; r < height; ++r) rows[r] = base + static_cast<size_t>(r) * width * 3;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("failed to encode PNG: " + path);
  }

  png_init_io(png, fp);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);

  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

torch::Tensor to_float_chw(const torch::Tensor& hwc_u8) {
  TORCH_CHECK(hwc_u8.dim() == 3 && hwc_u8.size(2) == 3 && hwc_u8.dtype() == torch::kUInt8,
              "to_float_chw expects (H, W, 3) uint8");
  return hwc_u8.to(torch::kFloat32).div(127.5).sub(1.0).permute({2, 0, 1}).contiguous();
}

torch::Tensor to_u8_hwc(const torch::Tensor& chw) {
  TORCH_CHECK(chw.dim() == 3 && chw.size(0) == 3, "to_u8_hwc expects (3, H, W)");
  return chw.detach()
      .clamp(-1.0, 1.0)
      .add(1.0)
      .mul(127.5)
      .round()
      .to(torch::kUInt8)
      .permute({1, 2, 0})
      .contiguous();
}

}  // namespace ugc
