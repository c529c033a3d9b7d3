#pragma once

// 16-bit PCM mono RIFF/WAVE reader and writer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "xdc/io.hpp"
#include "xdc/signal/stft.hpp"

namespace xdc::signal {

inline Waveform parse_wav(const std::string& bytes, const std::string& what = "wav") {
  xdc::detail::ByteReader r(bytes, what);
  if (bytes.size() < 12)
    throw IoError(what + ": missing RIFF header (file is " +
                  std::to_string(bytes.size()) + " bytes)");
  if (r.get_string(4, "RIFF tag") != "RIFF")
    throw IoError(what + ": expected 'RIFF' at offset 0");
  r.get<std::uint32_t>("RIFF size");
  if (r.get_string(4, "WAVE tag") != "WAVE")
    throw IoError(what + ": expected 'WAVE' at offset 8");

  bool have_fmt = false;
  Waveform w;
  while (true) {
    if (r.done() || bytes.size() - r.offset() < 8) {
      throw IoError(what + ": missing " + std::string(have_fmt ? "'data'" : "'fmt '") +
                    " chunk (file ends at offset " + std::to_string(bytes.size()) + ")");
    }
    const std::size_t chunk_at = r.offset();
    const std::string id = r.get_string(4, "chunk id");
    const auto size = r.get<std::uint32_t>("chunk size");
    if (id == "fmt ") {
      if (size < 16)
        throw IoError(what + ": 'fmt ' chunk at offset " + std::to_string(chunk_at) +
                      " is too short");
      const auto format = r.get<std::uint16_t>("format tag");
      const auto channels = r.get<std::uint16_t>("channel count");
      const auto rate = r.get<std::uint32_t>("sample rate");
      r.get<std::uint32_t>("byte rate");
      r.get<std::uint16_t>("block align");
      const auto bits = r.get<std::uint16_t>("bits per sample");
      r.get_string(size - 16, "fmt extension");
      if (format != 1)
        throw IoError(what + ": format tag " + std::to_string(format) + " at offset " +
                      std::to_string(chunk_at + 8) + " is not PCM");
      if (channels != 1)
        throw IoError(what + ": " + std::to_string(channels) + " channels at offset " +
                      std::to_string(chunk_at + 10) + ", only mono is supported");
      if (bits != 16)
        throw IoError(what + ": " + std::to_string(bits) + "-bit samples at offset " +
                      std::to_string(chunk_at + 22) + ", only 16-bit PCM is supported");
      if (rate == 0)
        throw IoError(what + ": zero sample rate at offset " + std::to_string(chunk_at + 12));
      w.sample_rate_hz = static_cast<int>(rate);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt)
        throw IoError(what + ": 'data' chunk at offset " + std::to_string(chunk_at) +
                      " precedes missing 'fmt ' chunk");
      if (bytes.size() - r.offset() < size)
        throw IoError(what + ": 'data' chunk at offset " + std::to_string(chunk_at) +
                      " declares " + std::to_string(size) + " bytes, only " +
                      std::to_string(bytes.size() - r.offset()) + " present");
      w.samples.resize(size / 2);
      for (auto& s : w.samples)
        s = static_cast<double>(static_cast<std::int16_t>(r.get<std::uint16_t>("sample"))) /
            32768.0;
      return w;
    } else {
      r.get_string(size + (size & 1u), "chunk body");
    }
  }
}

inline Waveform read_wav(const std::filesystem::path& path) {
  return parse_wav(xdc::detail::read_file(path), path.string());
}

// Clamps to [−32768, 32767] after rounding half away from zero.
inline std::int16_t quantize_pcm16(double v) {
  const double scaled = std::round(v * 32768.0);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

inline std::string serialize_wav(const Waveform& w) {
  if (w.sample_rate_hz <= 0)
    throw std::invalid_argument("write_wav: sample rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  std::string out = "RIFF";
  xdc::detail::put_le<std::uint32_t>(out, 36 + data_bytes);
  out += "WAVEfmt ";
  xdc::detail::put_le<std::uint32_t>(out, 16);
  xdc::detail::put_le<std::uint16_t>(out, 1);
  xdc::detail::put_le<std::uint16_t>(out, 1);
  xdc::detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate_hz));
  xdc::detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate_hz) * 2);
  xdc::detail::put_le<std::uint16_t>(out, 2);
  xdc::detail::put_le<std::uint16_t>(out, 16);
  out += "data";
  xdc::detail::put_le<std::uint32_t>(out, data_bytes);
  for (double s : w.samples)
    xdc::detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(quantize_pcm16(s)));
  return out;
}

inline void write_wav(const std::filesystem::path& path, const Waveform& w) {
  xdc::detail::write_file(path, serialize_wav(w));
}

}  // namespace xdc::signal
