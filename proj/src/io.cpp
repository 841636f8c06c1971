#include "maskscope/io.h"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace maskscope {

namespace {

constexpr char kMagic[4] = {'M', 'T', '0', '1'};

void put_u32_le(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("io: cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("io: cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("io: short write to " + path);
}

}  // namespace

std::size_t mt01_elem_size(Mt01Dtype dtype) {
  switch (dtype) {
    case Mt01Dtype::F32: return 4;
    case Mt01Dtype::F64: return 8;
    case Mt01Dtype::U8: return 1;
    case Mt01Dtype::U16: return 2;
    case Mt01Dtype::U32: return 4;
  }
  throw FormatError("mt01: unknown dtype code");
}

std::size_t Mt01::elem_count() const {
  std::size_t n = 1;
  for (std::uint32_t d : dims) n *= d;
  return n;
}

Mt01 load_mt01(const std::string& path) {
  const std::vector<unsigned char> bytes = read_file(path);
  if (bytes.size() < 6) {
    throw TruncatedPayloadError("mt01: " + path + " is shorter than the fixed header");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw BadMagicError("mt01: " + path + " does not start with MT01");
  }
  const std::uint8_t dtype_code = bytes[4];
  if (dtype_code < 1 || dtype_code > 5) {
    throw FormatError("mt01: " + path + " has unknown dtype code " + std::to_string(dtype_code));
  }
  Mt01 out;
  out.dtype = static_cast<Mt01Dtype>(dtype_code);
  const std::size_t ndim = bytes[5];
  const std::size_t header = 6 + 4 * ndim;
  if (bytes.size() < header) {
    throw TruncatedPayloadError("mt01: " + path + " header truncated");
  }
  for (std::size_t i = 0; i < ndim; ++i) out.dims.push_back(get_u32_le(&bytes[6 + 4 * i]));
  const std::size_t expected = out.elem_count() * mt01_elem_size(out.dtype);
  const std::size_t actual = bytes.size() - header;
  if (actual != expected) {
    throw TruncatedPayloadError("mt01: " + path + " truncated payload: expected " +
                                std::to_string(expected) + " bytes, got " +
                                std::to_string(actual));
  }
  out.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return out;
}

void save_mt01(const std::string& path, const Mt01& container) {
  if (container.dims.size() > 255) throw FormatError("mt01: too many dimensions");
  const std::size_t expected = container.elem_count() * mt01_elem_size(container.dtype);
  if (container.payload.size() != expected) {
    throw FormatError("mt01: payload size " + std::to_string(container.payload.size()) +
                      " does not match dims (expected " + std::to_string(expected) + ")");
  }
  std::vector<unsigned char> bytes;
  bytes.insert(bytes.end(), kMagic, kMagic + 4);
  bytes.push_back(static_cast<unsigned char>(container.dtype));
  bytes.push_back(static_cast<unsigned char>(container.dims.size()));
  for (std::uint32_t d : container.dims) put_u32_le(bytes, d);
  bytes.insert(bytes.end(), container.payload.begin(), container.payload.end());
  write_file(path, bytes);
}

Tensor load_tensor(const std::string& path) {
  const Mt01 c = load_mt01(path);
  Tensor out;
  for (std::uint32_t d : c.dims) out.shape.push_back(d);
  out.data.resize(c.elem_count());
  if (c.dtype == Mt01Dtype::F64) {
    static_assert(sizeof(double) == 8);
    std::memcpy(out.data.data(), c.payload.data(), c.payload.size());
  } else if (c.dtype == Mt01Dtype::F32) {
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      float f;
      std::memcpy(&f, c.payload.data() + 4 * i, 4);
      out.data[i] = static_cast<double>(f);
    }
  } else {
    throw DtypeMismatchError("mt01: " + path + " holds integer data where a real tensor was expected");
  }
  return out;
}

void save_tensor(const std::string& path, const Tensor& t, bool as_f32) {
  Mt01 c;
  c.dtype = as_f32 ? Mt01Dtype::F32 : Mt01Dtype::F64;
  for (std::size_t d : t.shape) c.dims.push_back(static_cast<std::uint32_t>(d));
  if (as_f32) {
    c.payload.resize(4 * t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const float f = static_cast<float>(t.data[i]);
      std::memcpy(c.payload.data() + 4 * i, &f, 4);
    }
  } else {
    c.payload.resize(8 * t.numel());
    std::memcpy(c.payload.data(), t.data.data(), c.payload.size());
  }
  save_mt01(path, c);
}

namespace {

template <typename T>
std::vector<T> load_ints(const std::string& path, Mt01Dtype want, const char* what,
                         std::vector<std::size_t>* dims) {
  const Mt01 c = load_mt01(path);
  if (c.dtype != want) {
    throw DtypeMismatchError(std::string("mt01: ") + path + " dtype does not match expected " +
                             what);
  }
  if (dims) {
    dims->clear();
    for (std::uint32_t d : c.dims) dims->push_back(d);
  }
  std::vector<T> out(c.elem_count());
  std::memcpy(out.data(), c.payload.data(), c.payload.size());
  return out;
}

template <typename T>
void save_ints(const std::string& path, Mt01Dtype dtype, const std::vector<T>& values,
               const std::vector<std::size_t>& dims) {
  Mt01 c;
  c.dtype = dtype;
  for (std::size_t d : dims) c.dims.push_back(static_cast<std::uint32_t>(d));
  c.payload.resize(values.size() * sizeof(T));
  std::memcpy(c.payload.data(), values.data(), c.payload.size());
  save_mt01(path, c);
}

}  // namespace

std::vector<std::uint8_t> load_u8(const std::string& path, std::vector<std::size_t>* dims) {
  return load_ints<std::uint8_t>(path, Mt01Dtype::U8, "u8", dims);
}

void save_u8(const std::string& path, const std::vector<std::uint8_t>& values,
             const std::vector<std::size_t>& dims) {
  save_ints(path, Mt01Dtype::U8, values, dims);
}

std::vector<std::uint16_t> load_u16(const std::string& path, std::vector<std::size_t>* dims) {
  return load_ints<std::uint16_t>(path, Mt01Dtype::U16, "u16", dims);
}

void save_u16(const std::string& path, const std::vector<std::uint16_t>& values,
              const std::vector<std::size_t>& dims) {
  save_ints(path, Mt01Dtype::U16, values, dims);
}

std::vector<std::uint32_t> load_u32(const std::string& path, std::vector<std::size_t>* dims) {
  return load_ints<std::uint32_t>(path, Mt01Dtype::U32, "u32", dims);
}

void save_u32(const std::string& path, const std::vector<std::uint32_t>& values,
              const std::vector<std::size_t>& dims) {
  save_ints(path, Mt01Dtype::U32, values, dims);
}

namespace {

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* file = nullptr;

  explicit PngReader(const std::string& path) {
    file = std::fopen(path.c_str(), "rb");
    if (!file) throw ValidationError("png: cannot open " + path);
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, file) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
      std::fclose(file);
      throw BadMagicError("png: " + path + " is not a PNG file");
    }
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
      if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
      std::fclose(file);
      throw FormatError("png: failed to initialize libpng");
    }
    png_init_io(png, file);
    png_set_sig_bytes(png, 8);
  }
  ~PngReader() {
    png_destroy_read_struct(&png, &info, nullptr);
    if (file) std::fclose(file);
  }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* file = nullptr;

  explicit PngWriter(const std::string& path) {
    file = std::fopen(path.c_str(), "wb");
    if (!file) throw ValidationError("png: cannot write " + path);
    png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
      if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
      std::fclose(file);
      throw FormatError("png: failed to initialize libpng");
    }
    png_init_io(png, file);
  }
  ~PngWriter() {
    png_destroy_write_struct(&png, &info);
    if (file) std::fclose(file);
  }
};

}  // namespace

LabelMap load_labelmap(const std::string& path) {
  PngReader r(path);
  if (setjmp(png_jmpbuf(r.png))) throw FormatError("png: failed to decode " + path);
  png_read_info(r.png, r.info);
  const png_uint_32 w = png_get_image_width(r.png, r.info);
  const png_uint_32 h = png_get_image_height(r.png, r.info);
  const int depth = png_get_bit_depth(r.png, r.info);
  const int color = png_get_color_type(r.png, r.info);
  if (depth != 16 || color != PNG_COLOR_TYPE_GRAY) {
    throw FormatError("png: " + path + " must be 16-bit grayscale for label maps");
  }
  png_set_interlace_handling(r.png);
  png_read_update_info(r.png, r.info);

  LabelMap out(h, w);
  std::vector<unsigned char> row(2 * w);
  std::vector<std::vector<unsigned char>> rows(h, row);
  std::vector<png_bytep> ptrs(h);
  for (std::size_t i = 0; i < h; ++i) ptrs[i] = rows[i].data();
  png_read_image(r.png, ptrs.data());
  for (std::size_t rr = 0; rr < h; ++rr) {
    for (std::size_t cc = 0; cc < w; ++cc) {
      // PNG samples are big-endian.
      out.at(rr, cc) = static_cast<std::uint16_t>((rows[rr][2 * cc] << 8) | rows[rr][2 * cc + 1]);
    }
  }
  png_read_end(r.png, nullptr);
  return out;
}

void save_labelmap(const std::string& path, const LabelMap& map) {
  if (map.h == 0 || map.w == 0) throw ShapeError("png: refusing to write an empty label map");
  PngWriter wtr(path);
  if (setjmp(png_jmpbuf(wtr.png))) throw FormatError("png: failed to encode " + path);
  png_set_IHDR(wtr.png, wtr.info, static_cast<png_uint_32>(map.w),
               static_cast<png_uint_32>(map.h), 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(wtr.png, wtr.info);
  std::vector<unsigned char> row(2 * map.w);
  for (std::size_t r = 0; r < map.h; ++r) {
    for (std::size_t c = 0; c < map.w; ++c) {
      const std::uint16_t v = map.at(r, c);
      row[2 * c] = static_cast<unsigned char>(v >> 8);
      row[2 * c + 1] = static_cast<unsigned char>(v & 0xff);
    }
    png_write_row(wtr.png, row.data());
  }
  png_write_end(wtr.png, nullptr);
}

ImageRgb8 load_image(const std::string& path) {
  PngReader r(path);
  if (setjmp(png_jmpbuf(r.png))) throw FormatError("png: failed to decode " + path);
  png_read_info(r.png, r.info);
  const png_uint_32 w = png_get_image_width(r.png, r.info);
  const png_uint_32 h = png_get_image_height(r.png, r.info);
  const int depth = png_get_bit_depth(r.png, r.info);
  const int color = png_get_color_type(r.png, r.info);
  if (depth != 8 || color != PNG_COLOR_TYPE_RGB) {
    throw FormatError("png: " + path + " must be 8-bit RGB");
  }
  png_set_interlace_handling(r.png);
  png_read_update_info(r.png, r.info);

  ImageRgb8 out(h, w);
  std::vector<png_bytep> ptrs(h);
  for (std::size_t i = 0; i < h; ++i) ptrs[i] = out.data.data() + i * w * 3;
  png_read_image(r.png, ptrs.data());
  png_read_end(r.png, nullptr);
  return out;
}

void save_image(const std::string& path, const ImageRgb8& image) {
  if (image.h == 0 || image.w == 0) throw ShapeError("png: refusing to write an empty image");
  PngWriter wtr(path);
  if (setjmp(png_jmpbuf(wtr.png))) throw FormatError("png: failed to encode " + path);
  png_set_IHDR(wtr.png, wtr.info, static_cast<png_uint_32>(image.w),
               static_cast<png_uint_32>(image.h), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(wtr.png, wtr.info);
  for (std::size_t r = 0; r < image.h; ++r) {
    png_write_row(wtr.png, const_cast<png_bytep>(image.data.data() + r * image.w * 3));
  }
  png_write_end(wtr.png, nullptr);
}

std::uint32_t encode_panoptic_pixel(std::uint16_t class_id, std::uint16_t instance_id) {
  if (instance_id >= kPanopticInstanceBase) {
    throw ValidationError("panoptic encode: instance id " + std::to_string(instance_id) +
                          " exceeds " + std::to_string(kPanopticInstanceBase - 1));
  }
  return static_cast<std::uint32_t>(class_id) * kPanopticInstanceBase + instance_id;
}

PanopticMap load_panoptic(const std::string& path) {
  std::vector<std::size_t> dims;
  const std::vector<std::uint32_t> packed = load_u32(path, &dims);
  if (dims.size() != 2) {
    throw FormatError("panoptic: " + path + " must be a rank-2 u32 tensor");
  }
  PanopticMap out(dims[0], dims[1]);
  for (std::size_t i = 0; i < packed.size(); ++i) {
    out.class_ids[i] = static_cast<std::uint16_t>(packed[i] / kPanopticInstanceBase);
    out.instance_ids[i] = static_cast<std::uint16_t>(packed[i] % kPanopticInstanceBase);
  }
  return out;
}

void save_panoptic(const std::string& path, const PanopticMap& map) {
  std::vector<std::uint32_t> packed(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    packed[i] = encode_panoptic_pixel(map.class_ids[i], map.instance_ids[i]);
  }
  save_u32(path, packed, {map.h, map.w});
}

}  // namespace maskscope
