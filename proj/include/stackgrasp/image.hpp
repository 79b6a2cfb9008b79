#pragma once

// 8-bit RGB image buffer with PNG I/O (libpng), simple raster drawing for
// the synthetic scenes, nearest-neighbor resize, and HSV conversion for the
// gamut augmentation.

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "stackgrasp/errors.hpp"

namespace stackgrasp {

struct Image {
  int w = 0, h = 0;
  std::vector<uint8_t> rgb;  // row-major, 3 bytes per pixel

  Image() = default;
  Image(int w_, int h_, std::array<uint8_t, 3> fill = {0, 0, 0}) : w(w_), h(h_) {
    rgb.resize(static_cast<size_t>(w) * h * 3);
    for (int i = 0; i < w * h; ++i) {
      rgb[static_cast<size_t>(i) * 3] = fill[0];
      rgb[static_cast<size_t>(i) * 3 + 1] = fill[1];
      rgb[static_cast<size_t>(i) * 3 + 2] = fill[2];
    }
  }

  uint8_t* px(int x, int y) { return &rgb[(static_cast<size_t>(y) * w + x) * 3]; }
  const uint8_t* px(int x, int y) const {
    return &rgb[(static_cast<size_t>(y) * w + x) * 3];
  }

  void set(int x, int y, std::array<uint8_t, 3> c) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    uint8_t* p = px(x, y);
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }

  void fill_rect(int x1, int y1, int x2, int y2, std::array<uint8_t, 3> c) {
    x1 = std::max(0, x1);
    y1 = std::max(0, y1);
    x2 = std::min(w, x2);
    y2 = std::min(h, y2);
    for (int y = y1; y < y2; ++y)
      for (int x = x1; x < x2; ++x) set(x, y, c);
  }

  void draw_border(int x1, int y1, int x2, int y2, std::array<uint8_t, 3> c) {
    for (int x = x1; x < x2; ++x) {
      set(x, y1, c);
      set(x, y2 - 1, c);
    }
    for (int y = y1; y < y2; ++y) {
      set(x1, y, c);
      set(x2 - 1, y, c);
    }
  }
};

inline void png_write(const Image& img, const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw DataError("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw DataError("png write failed: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h),
               8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(img.h));
  for (int y = 0; y < img.h; ++y)
    rows[static_cast<size_t>(y)] =
        const_cast<png_bytep>(&img.rgb[static_cast<size_t>(y) * img.w * 3]);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline Image png_read(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw DataError("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw DataError("png read failed: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  Image img;
  img.w = static_cast<int>(png_get_image_width(png, info));
  img.h = static_cast<int>(png_get_image_height(png, info));
  img.rgb.resize(static_cast<size_t>(img.w) * img.h * 3);
  std::vector<png_bytep> rows(static_cast<size_t>(img.h));
  for (int y = 0; y < img.h; ++y)
    rows[static_cast<size_t>(y)] = &img.rgb[static_cast<size_t>(y) * img.w * 3];
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

inline Image resize_nearest(const Image& src, int ow, int oh) {
  Image out(ow, oh);
  for (int y = 0; y < oh; ++y) {
    int sy = std::min(src.h - 1, y * src.h / oh);
    for (int x = 0; x < ow; ++x) {
      int sx = std::min(src.w - 1, x * src.w / ow);
      const uint8_t* p = src.px(sx, sy);
      out.set(x, y, {p[0], p[1], p[2]});
    }
  }
  return out;
}

// h in [0,360), s,v in [0,1]
inline void rgb_to_hsv(uint8_t r8, uint8_t g8, uint8_t b8, double& h, double& s, double& v) {
  double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
  double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  v = mx;
  double d = mx - mn;
  s = mx == 0 ? 0 : d / mx;
  if (d == 0) {
    h = 0;
  } else if (mx == r) {
    h = 60 * std::fmod((g - b) / d, 6.0);
  } else if (mx == g) {
    h = 60 * ((b - r) / d + 2);
  } else {
    h = 60 * ((r - g) / d + 4);
  }
  if (h < 0) h += 360;
}

inline void hsv_to_rgb(double h, double s, double v, uint8_t& r8, uint8_t& g8, uint8_t& b8) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0);
  s = std::clamp(s, 0.0, 1.0);
  v = std::clamp(v, 0.0, 1.0);
  double c = v * s;
  double x = c * (1 - std::abs(std::fmod(h / 60.0, 2.0) - 1));
  double m = v - c;
  double r = 0, g = 0, b = 0;
  if (h < 60) { r = c; g = x; }
  else if (h < 120) { r = x; g = c; }
  else if (h < 180) { g = c; b = x; }
  else if (h < 240) { g = x; b = c; }
  else if (h < 300) { r = x; b = c; }
  else { r = c; b = x; }
  auto to8 = [&](double u) {
    return static_cast<uint8_t>(std::lround(std::clamp((u + m) * 255.0, 0.0, 255.0)));
  };
  r8 = to8(r);
  g8 = to8(g);
  b8 = to8(b);
}

// Distinct saturated colors per foreground class id (1-based); id 0 is
// background and never drawn.
inline std::array<uint8_t, 3> class_color(int cls) {
  static const std::array<uint8_t, 3> palette[] = {
      {200, 60, 50},   // red
      {60, 120, 210},  // blue
      {70, 170, 80},   // green
      {230, 180, 40},  // yellow
      {160, 80, 190},  // purple
      {40, 180, 180},  // teal
      {230, 120, 40},  // orange
      {120, 120, 120},
  };
  int n = static_cast<int>(sizeof(palette) / sizeof(palette[0]));
  int i = ((cls - 1) % n + n) % n;
  return palette[i];
}

}  // namespace stackgrasp
