#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskscope/outliermix.h"
#include "maskscope/tensor.h"
#include "maskscope/types.h"

namespace maskscope {

// MT01 container: magic "MT01", one dtype byte, one ndim byte, ndim u32
// little-endian extents, then the row-major little-endian payload.
enum class Mt01Dtype : std::uint8_t { F32 = 1, F64 = 2, U8 = 3, U16 = 4, U32 = 5 };

struct Mt01 {
  Mt01Dtype dtype = Mt01Dtype::F64;
  std::vector<std::uint32_t> dims;
  std::vector<unsigned char> payload;

  std::size_t elem_count() const;
};

std::size_t mt01_elem_size(Mt01Dtype dtype);

Mt01 load_mt01(const std::string& path);
void save_mt01(const std::string& path, const Mt01& container);

// Floating tensors. Loading accepts F32 (widened) and F64; saving defaults to
// F64 and narrows to F32 only when explicitly asked.
Tensor load_tensor(const std::string& path);
void save_tensor(const std::string& path, const Tensor& t, bool as_f32 = false);

std::vector<std::uint8_t> load_u8(const std::string& path, std::vector<std::size_t>* dims);
void save_u8(const std::string& path, const std::vector<std::uint8_t>& values,
             const std::vector<std::size_t>& dims);
std::vector<std::uint16_t> load_u16(const std::string& path, std::vector<std::size_t>* dims);
void save_u16(const std::string& path, const std::vector<std::uint16_t>& values,
              const std::vector<std::size_t>& dims);
std::vector<std::uint32_t> load_u32(const std::string& path, std::vector<std::size_t>* dims);
void save_u32(const std::string& path, const std::vector<std::uint32_t>& values,
              const std::vector<std::size_t>& dims);

// 16-bit grayscale PNG label maps, value = class id, 65535 = void. Anything
// else (8-bit, colour, palette) is rejected.
LabelMap load_labelmap(const std::string& path);
void save_labelmap(const std::string& path, const LabelMap& map);

// 8-bit RGB PNG images for the compositing pipeline.
ImageRgb8 load_image(const std::string& path);
void save_image(const std::string& path, const ImageRgb8& image);

// Panoptic maps travel as u32 MT01 tensors packed class_id * 1000 +
// instance_id; instance ids must stay below 1000.
inline constexpr std::uint32_t kPanopticInstanceBase = 1000;

PanopticMap load_panoptic(const std::string& path);
void save_panoptic(const std::string& path, const PanopticMap& map);

std::uint32_t encode_panoptic_pixel(std::uint16_t class_id, std::uint16_t instance_id);

}  // namespace maskscope
