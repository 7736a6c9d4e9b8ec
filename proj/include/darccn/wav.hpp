#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "darccn/common.hpp"
#include "darccn/signal.hpp"

namespace darccn::signal {

// Minimal RIFF/WAVE support for the one format the engine accepts:
// PCM, 16-bit, mono, 16 kHz. Anything else is rejected with a clear message.

namespace detail {

inline std::uint32_t rd_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t rd_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void wr_u32(std::vector<unsigned char>& v, std::uint32_t x) {
  v.push_back(static_cast<unsigned char>(x & 0xff));
  v.push_back(static_cast<unsigned char>((x >> 8) & 0xff));
  v.push_back(static_cast<unsigned char>((x >> 16) & 0xff));
  v.push_back(static_cast<unsigned char>((x >> 24) & 0xff));
}

inline void wr_u16(std::vector<unsigned char>& v, std::uint16_t x) {
  v.push_back(static_cast<unsigned char>(x & 0xff));
  v.push_back(static_cast<unsigned char>((x >> 8) & 0xff));
}

}  // namespace detail

inline Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open wav file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw io_error("not a RIFF/WAVE file: " + path);

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t len = detail::rd_u32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) throw io_error("truncated wav chunk in " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw io_error("malformed fmt chunk in " + path);
      format = detail::rd_u16(bytes.data() + body);
      channels = detail::rd_u16(bytes.data() + body + 2);
      rate = detail::rd_u32(bytes.data() + body + 4);
      bits = detail::rd_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1);  // chunks are word-aligned
  }
  if (!have_fmt || data == nullptr) throw io_error("wav missing fmt/data chunk: " + path);
  if (format != 1) throw io_error("unsupported wav encoding (want PCM): " + path);
  if (channels != 1) throw io_error("unsupported wav channel count (want mono): " + path);
  if (bits != 16) throw io_error("unsupported wav bit depth (want 16-bit): " + path);
  if (rate != 16000) throw io_error("unsupported wav sample rate (want 16000 Hz): " + path);

  Waveform w;
  w.sample_rate = 16000;
  const std::size_t n = data_len / 2;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::int16_t s =
        static_cast<std::int16_t>(static_cast<std::uint16_t>(data[2 * i] | (data[2 * i + 1] << 8)));
    w.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return w;
}

inline void write_wav(const std::string& path, const Waveform& w) {
  if (w.sample_rate != 16000) throw io_error("write_wav: only 16000 Hz supported");
  const std::uint32_t n = static_cast<std::uint32_t>(w.samples.size());
  std::vector<unsigned char> out;
  out.reserve(44 + 2 * n);
  const char* riff = "RIFF";
  out.insert(out.end(), riff, riff + 4);
  detail::wr_u32(out, 36 + 2 * n);
  const char* rest = "WAVEfmt ";
  out.insert(out.end(), rest, rest + 8);
  detail::wr_u32(out, 16);
  detail::wr_u16(out, 1);       // PCM
  detail::wr_u16(out, 1);       // mono
  detail::wr_u32(out, 16000);   // sample rate
  detail::wr_u32(out, 32000);   // byte rate
  detail::wr_u16(out, 2);       // block align
  detail::wr_u16(out, 16);      // bits
  const char* dataid = "data";
  out.insert(out.end(), dataid, dataid + 4);
  detail::wr_u32(out, 2 * n);
  for (std::uint32_t i = 0; i < n; ++i) {
    double x = w.samples[i];
    if (x > 1.0) x = 1.0;
    if (x < -1.0) x = -1.0;
    long v = std::lround(x * 32768.0);
    if (v > 32767) v = 32767;
    if (v < -32768) v = -32768;
    detail::wr_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open wav file for writing: " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw io_error("failed writing wav file: " + path);
}

}  // namespace darccn::signal
