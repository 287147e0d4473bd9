#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "ssep/signal.hpp"

namespace ssep::signal {

namespace {

struct RiffFmt {
  std::uint16_t format = 0;  // 1 = PCM, 3 = IEEE float
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
};

template <typename T>
T read_le(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

AudioBuffer read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("wav: cannot open " + path);

  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0) throw std::runtime_error("wav: not RIFF: " + path);
  read_le<std::uint32_t>(in);  // riff size
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0) throw std::runtime_error("wav: not WAVE: " + path);

  RiffFmt fmt;
  std::vector<char> data;
  bool have_fmt = false, have_data = false;
  while (in.read(tag, 4)) {
    std::uint32_t chunk_size = read_le<std::uint32_t>(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      fmt.format = read_le<std::uint16_t>(in);
      fmt.channels = read_le<std::uint16_t>(in);
      fmt.sample_rate = read_le<std::uint32_t>(in);
      read_le<std::uint32_t>(in);  // byte rate
      read_le<std::uint16_t>(in);  // block align
      fmt.bits = read_le<std::uint16_t>(in);
      if (chunk_size > 16) in.seekg(chunk_size - 16, std::ios::cur);
      // WAVE_FORMAT_EXTENSIBLE wraps the real format in its first subformat
      // bytes; the common PCM/float cases are resolved by bit depth instead
      if (fmt.format == 0xFFFE) fmt.format = (fmt.bits == 32) ? 3 : 1;
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data.resize(chunk_size);
      in.read(data.data(), chunk_size);
      have_data = true;
    } else {
      in.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
    if (have_fmt && have_data) break;
  }
  if (!have_fmt || !have_data) throw std::runtime_error("wav: missing fmt/data chunk: " + path);
  if (fmt.channels == 0) throw std::runtime_error("wav: zero channels: " + path);

  AudioBuffer out;
  out.sample_rate = static_cast<int>(fmt.sample_rate);
  out.channels.resize(fmt.channels);

  if (fmt.format == 1 && fmt.bits == 16) {
    const size_t frames = data.size() / (2 * fmt.channels);
    const auto* samples = reinterpret_cast<const std::int16_t*>(data.data());
    for (auto& ch : out.channels) ch.resize(frames);
    for (size_t f = 0; f < frames; ++f)
      for (int c = 0; c < fmt.channels; ++c)
        out.channels[c][f] = samples[f * fmt.channels + c] / 32768.0;
  } else if (fmt.format == 3 && fmt.bits == 32) {
    const size_t frames = data.size() / (4 * fmt.channels);
    const auto* samples = reinterpret_cast<const float*>(data.data());
    for (auto& ch : out.channels) ch.resize(frames);
    for (size_t f = 0; f < frames; ++f)
      for (int c = 0; c < fmt.channels; ++c)
        out.channels[c][f] = static_cast<double>(samples[f * fmt.channels + c]);
  } else {
    throw std::runtime_error("wav: unsupported format (" + std::to_string(fmt.format) + "/" +
                             std::to_string(fmt.bits) + " bit) in " + path);
  }
  return out;
}

namespace {

void write_wav_header(std::ostream& out, int channels, int sample_rate, int bits,
                      std::uint16_t format, std::uint32_t data_bytes) {
  const int block_align = channels * bits / 8;
  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, format);
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(channels));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate * block_align));
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(block_align));
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(bits));
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_bytes);
}

}  // namespace

void write_wav(const std::string& path, const AudioBuffer& buffer, WavFormat format) {
  if (buffer.channels.empty()) throw std::invalid_argument("wav: nothing to write");
  const size_t frames = buffer.channels[0].size();
  for (const auto& ch : buffer.channels)
    if (ch.size() != frames) throw std::invalid_argument("wav: channel lengths differ");
  const int channels = static_cast<int>(buffer.channels.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("wav: cannot open for writing: " + path);

  if (format == WavFormat::kPcm16) {
    const std::uint32_t bytes = static_cast<std::uint32_t>(frames * channels * 2);
    write_wav_header(out, channels, buffer.sample_rate, 16, 1, bytes);
    for (size_t f = 0; f < frames; ++f)
      for (int c = 0; c < channels; ++c) {
        double v = std::clamp(buffer.channels[c][f], -1.0, 1.0);
        write_le<std::int16_t>(out, static_cast<std::int16_t>(std::lrint(v * 32767.0)));
      }
  } else {
    const std::uint32_t bytes = static_cast<std::uint32_t>(frames * channels * 4);
    write_wav_header(out, channels, buffer.sample_rate, 32, 3, bytes);
    for (size_t f = 0; f < frames; ++f)
      for (int c = 0; c < channels; ++c)
        write_le<float>(out, static_cast<float>(buffer.channels[c][f]));
  }
  if (!out) throw std::runtime_error("wav: write failed: " + path);
}

void write_wav_pcm16_raw(const std::string& path,
                         const std::vector<std::vector<int16_t>>& channels, int sample_rate) {
  if (channels.empty()) throw std::invalid_argument("wav: nothing to write");
  const size_t frames = channels[0].size();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("wav: cannot open for writing: " + path);
  const std::uint32_t bytes = static_cast<std::uint32_t>(frames * channels.size() * 2);
  write_wav_header(out, static_cast<int>(channels.size()), sample_rate, 16, 1, bytes);
  for (size_t f = 0; f < frames; ++f)
    for (const auto& ch : channels) write_le<std::int16_t>(out, ch[f]);
  if (!out) throw std::runtime_error("wav: write failed: " + path);
}

}  // namespace ssep::signal
