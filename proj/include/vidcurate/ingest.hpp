#pragma once

// Codec-free frame access. The library reads raw YUV4MPEG2 (Y4M) only;
// anything else is converted to Y4M by an external transcoder beforehand.
//
// YCbCr -> RGB uses BT.601 full-range (JFIF) coefficients in 16.16 fixed
// point, so decoding is bit-exact across platforms:
//
//   Cb' = Cb - 128, Cr' = Cr - 128
//   R = clamp(Y + ((91881 * Cr' + 32768) >> 16))
//   G = clamp(Y + ((-22554 * Cb' - 46802 * Cr' + 32768) >> 16))
//   B = clamp(Y + ((116130 * Cb' + 32768) >> 16))
//
// 4:2:0 chroma is upsampled by sample replication (each chroma sample
// covers its 2x2 luma block).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vidcurate/error.hpp"
#include "vidcurate/image.hpp"

namespace vidcurate {

struct Frame {
  std::uint64_t index = 0;
  double t_s = 0;
  RgbImage pixels;
};

// Sequential frame producer with random access by time.
class FrameSource {
 public:
  virtual ~FrameSource() = default;

  virtual double fps() const = 0;
  virtual std::uint32_t width() const = 0;
  virtual std::uint32_t height() const = 0;
  virtual std::uint64_t frame_count() const = 0;

  // Next frame in index order, or nullopt at end of stream.
  virtual std::optional<Frame> next() = 0;
  // Position so the next frame is the first with t_s >= target.
  virtual void seek(double t_s) = 0;

  double duration_s() const { return static_cast<double>(frame_count()) / fps(); }

  // Index of the first frame with t_s >= t (tolerant of rounding).
  std::uint64_t index_at_or_after(double t) const {
    if (t <= 0) return 0;
    const double x = std::ceil(t * fps() - 1e-9);
    return static_cast<std::uint64_t>(std::max(0.0, x));
  }
};

// Frames held in memory; handy for synthetic content and tests.
class MemorySource final : public FrameSource {
 public:
  MemorySource(double fps, std::vector<RgbImage> frames) : fps_(fps), frames_(std::move(frames)) {
    if (!(fps_ > 0)) throw PreconditionError("fps must be > 0");
    for (const auto& f : frames_)
      if (f.width() != frames_.front().width() || f.height() != frames_.front().height())
        throw PreconditionError("frames must share dimensions");
  }

  double fps() const override { return fps_; }
  std::uint32_t width() const override { return frames_.empty() ? 0 : frames_[0].width(); }
  std::uint32_t height() const override { return frames_.empty() ? 0 : frames_[0].height(); }
  std::uint64_t frame_count() const override { return frames_.size(); }

  std::optional<Frame> next() override {
    if (pos_ >= frames_.size()) return std::nullopt;
    Frame f{pos_, static_cast<double>(pos_) / fps_, frames_[pos_]};
    ++pos_;
    return f;
  }
  void seek(double t_s) override { pos_ = std::min<std::uint64_t>(index_at_or_after(t_s), frames_.size()); }

 private:
  double fps_;
  std::vector<RgbImage> frames_;
  std::uint64_t pos_ = 0;
};

enum class ChromaFormat { c420, c444 };

struct Y4mHeader {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t fps_num = 25;
  std::uint32_t fps_den = 1;
  ChromaFormat chroma = ChromaFormat::c420;

  std::size_t frame_bytes() const {
    const std::size_t luma = static_cast<std::size_t>(width) * height;
    if (chroma == ChromaFormat::c444) return luma * 3;
    const std::size_t cw = (width + 1) / 2;
    const std::size_t ch = (height + 1) / 2;
    return luma + 2 * cw * ch;
  }
  double fps() const { return static_cast<double>(fps_num) / fps_den; }
};

inline Y4mHeader parse_y4m_header(const std::string& line) {
  std::istringstream in(line);
  std::string magic;
  in >> magic;
  if (magic != "YUV4MPEG2") throw FormatError("bad Y4M magic");
  Y4mHeader h;
  std::string tok;
  while (in >> tok) {
    const char tag = tok[0];
    const std::string val = tok.substr(1);
    switch (tag) {
      case 'W': h.width = static_cast<std::uint32_t>(std::stoul(val)); break;
      case 'H': h.height = static_cast<std::uint32_t>(std::stoul(val)); break;
      case 'F': {
        const auto colon = val.find(':');
        if (colon == std::string::npos) throw FormatError("bad Y4M frame rate");
        h.fps_num = static_cast<std::uint32_t>(std::stoul(val.substr(0, colon)));
        h.fps_den = static_cast<std::uint32_t>(std::stoul(val.substr(colon + 1)));
        break;
      }
      case 'C':
        if (val.rfind("420", 0) == 0)
          h.chroma = ChromaFormat::c420;
        else if (val == "444")
          h.chroma = ChromaFormat::c444;
        else
          throw FormatError("unsupported Y4M chroma subsampling: " + val);
        break;
      default: break;  // I, A, X: irrelevant here
    }
  }
  if (h.width == 0 || h.height == 0) throw FormatError("Y4M header lacks dimensions");
  if (h.fps_num == 0 || h.fps_den == 0) throw FormatError("bad Y4M frame rate");
  return h;
}

namespace detail {

inline std::uint8_t clamp_u8(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

inline void ycbcr_to_rgb(int y, int cb, int cr, std::uint8_t* rgb) {
  cb -= 128;
  cr -= 128;
  rgb[0] = clamp_u8(y + ((91881 * cr + 32768) >> 16));
  rgb[1] = clamp_u8(y + ((-22554 * cb - 46802 * cr + 32768) >> 16));
  rgb[2] = clamp_u8(y + ((116130 * cb + 32768) >> 16));
}

inline void rgb_to_ycbcr(const std::uint8_t* rgb, double& y, double& cb, double& cr) {
  const double r = rgb[0], g = rgb[1], b = rgb[2];
  y = 0.299 * r + 0.587 * g + 0.114 * b;
  cb = 128 - 0.168736 * r - 0.331264 * g + 0.5 * b;
  cr = 128 + 0.5 * r - 0.418688 * g - 0.081312 * b;
}

inline std::uint8_t round_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace detail

inline RgbImage decode_y4m_frame(const Y4mHeader& h, const std::vector<std::uint8_t>& buf) {
  RgbImage img(h.width, h.height);
  const std::size_t luma = static_cast<std::size_t>(h.width) * h.height;
  const std::uint8_t* yp = buf.data();
  if (h.chroma == ChromaFormat::c444) {
    const std::uint8_t* up = yp + luma;
    const std::uint8_t* vp = up + luma;
    for (std::size_t i = 0; i < luma; ++i)
      detail::ycbcr_to_rgb(yp[i], up[i], vp[i], &img.buffer()[i * 3]);
    return img;
  }
  const std::size_t cw = (h.width + 1) / 2;
  const std::size_t ch = (h.height + 1) / 2;
  const std::uint8_t* up = yp + luma;
  const std::uint8_t* vp = up + cw * ch;
  for (std::uint32_t y = 0; y < h.height; ++y)
    for (std::uint32_t x = 0; x < h.width; ++x) {
      const std::size_t c = (y / 2) * cw + x / 2;
      detail::ycbcr_to_rgb(yp[static_cast<std::size_t>(y) * h.width + x], up[c], vp[c],
                           &img.at(x, y, 0));
    }
  return img;
}

// Y4M file reader. The frame table is built on open by walking FRAME
// headers; a truncated trailing frame is reported as an error only once the
// whole frames before it have been consumed.
class Y4mSource final : public FrameSource {
 public:
  explicit Y4mSource(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw Error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in_, line)) throw FormatError("bad Y4M magic");
    header_ = parse_y4m_header(line);
    index_frames(std::filesystem::file_size(path));
  }

  const Y4mHeader& header() const noexcept { return header_; }
  bool truncated() const noexcept { return truncated_; }

  double fps() const override { return header_.fps(); }
  std::uint32_t width() const override { return header_.width; }
  std::uint32_t height() const override { return header_.height; }
  std::uint64_t frame_count() const override { return offsets_.size(); }

  std::optional<Frame> next() override {
    if (pos_ >= offsets_.size()) {
      if (truncated_)
        throw FormatError("truncated Y4M stream after frame " + std::to_string(offsets_.size()));
      return std::nullopt;
    }
    std::vector<std::uint8_t> buf(header_.frame_bytes());
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(offsets_[pos_]));
    in_.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in_) throw FormatError("read error in frame " + std::to_string(pos_));
    Frame f{pos_,
            static_cast<double>(pos_) * header_.fps_den / header_.fps_num,
            decode_y4m_frame(header_, buf)};
    ++pos_;
    return f;
  }

  void seek(double t_s) override {
    pos_ = std::min<std::uint64_t>(index_at_or_after(t_s), offsets_.size());
  }

 private:
  void index_frames(std::uintmax_t file_size) {
    const std::size_t payload = header_.frame_bytes();
    std::string line;
    while (true) {
      const auto at = static_cast<std::uintmax_t>(in_.tellg());
      if (at >= file_size) break;
      if (!std::getline(in_, line) || line.rfind("FRAME", 0) != 0 || in_.eof()) {
        truncated_ = true;
        break;
      }
      const auto data_at = static_cast<std::uintmax_t>(in_.tellg());
      if (data_at + payload > file_size) {
        truncated_ = true;
        break;
      }
      offsets_.push_back(data_at);
      in_.seekg(static_cast<std::streamoff>(data_at + payload));
    }
    in_.clear();
  }

  std::ifstream in_;
  Y4mHeader header_;
  std::vector<std::uintmax_t> offsets_;
  bool truncated_ = false;
  std::uint64_t pos_ = 0;
};

inline std::unique_ptr<FrameSource> open_y4m(const std::filesystem::path& path) {
  return std::make_unique<Y4mSource>(path);
}

// Y4M writer used for synthetic corpora and fixtures.
class Y4mWriter {
 public:
  Y4mWriter(const std::filesystem::path& path, std::uint32_t width, std::uint32_t height,
            std::uint32_t fps_num, std::uint32_t fps_den = 1,
            ChromaFormat chroma = ChromaFormat::c420)
      : out_(path, std::ios::binary | std::ios::trunc), header_{width, height, fps_num, fps_den, chroma} {
    if (!out_) throw Error("cannot write " + path.string());
    out_ << "YUV4MPEG2 W" << width << " H" << height << " F" << fps_num << ':' << fps_den
         << " Ip A1:1 C" << (chroma == ChromaFormat::c444 ? "444" : "420jpeg") << '\n';
  }

  void write(const RgbImage& img) {
    if (img.width() != header_.width || img.height() != header_.height)
      throw PreconditionError("frame size does not match Y4M header");
    const std::uint32_t w = header_.width, h = header_.height;
    const std::size_t luma = static_cast<std::size_t>(w) * h;
    std::vector<double> cb(luma), cr(luma);
    std::vector<std::uint8_t> buf;
    buf.reserve(header_.frame_bytes());
    for (std::size_t i = 0; i < luma; ++i) {
      double y;
      detail::rgb_to_ycbcr(&img.buffer()[i * 3], y, cb[i], cr[i]);
      buf.push_back(detail::round_u8(y));
    }
    if (header_.chroma == ChromaFormat::c444) {
      for (double v : cb) buf.push_back(detail::round_u8(v));
      for (double v : cr) buf.push_back(detail::round_u8(v));
    } else {
      for (const auto* plane : {&cb, &cr}) {
        for (std::uint32_t y = 0; y < h; y += 2)
          for (std::uint32_t x = 0; x < w; x += 2) {
            double acc = 0;
            int n = 0;
            for (std::uint32_t dy = 0; dy < 2 && y + dy < h; ++dy)
              for (std::uint32_t dx = 0; dx < 2 && x + dx < w; ++dx) {
                acc += (*plane)[static_cast<std::size_t>(y + dy) * w + x + dx];
                ++n;
              }
            buf.push_back(detail::round_u8(acc / n));
          }
      }
    }
    out_ << "FRAME\n";
    out_.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out_) throw Error("Y4M write failed");
  }

 private:
  std::ofstream out_;
  Y4mHeader header_;
};

// ---------------------------------------------------------------------------
// Keyframe sidecar: `<video>.kf.txt`, one ascending timestamp (seconds) per
// line. 0.0 is prepended when absent.

inline std::vector<double> parse_keyframe_index(std::istream& in) {
  std::vector<double> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    double t;
    try {
      std::size_t used = 0;
      t = std::stod(line, &used);
      if (line.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw FormatError("keyframe index line " + std::to_string(line_no) + ": not a number");
    }
    if (!std::isfinite(t) || t < 0)
      throw FormatError("keyframe index line " + std::to_string(line_no) + ": negative or non-finite");
    if (!out.empty() && !(t > out.back()))
      throw FormatError("keyframe index line " + std::to_string(line_no) + ": not strictly ascending");
    out.push_back(t);
  }
  if (out.empty() || out.front() != 0.0) out.insert(out.begin(), 0.0);
  return out;
}

inline std::vector<double> load_keyframe_index(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_keyframe_index(in);
}

inline void write_keyframe_index(const std::vector<double>& keyframes,
                                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  for (double t : keyframes) out << t << '\n';
}

inline std::filesystem::path keyframe_sidecar_path(const std::filesystem::path& video) {
  auto p = video;
  p.replace_extension(".kf.txt");
  return p;
}

// ---------------------------------------------------------------------------
// Fixed-rate sampling

// Native frame index nearest to time t; exact ties resolve to the lower index.
inline std::uint64_t nearest_frame_index(double t, double fps) {
  const double x = t * fps;
  return static_cast<std::uint64_t>(std::max(0.0, std::ceil(x - 0.5 - 1e-9)));
}

// Indices selected by sampling [start_s, end_s) at target_fps: for each tick
// start_s + k / target_fps < end_s, the nearest native frame inside the span.
inline std::vector<std::uint64_t> sample_indices(double native_fps, std::uint64_t frame_count,
                                                 double target_fps, double start_s, double end_s) {
  if (!(target_fps > 0)) throw PreconditionError("target_fps must be > 0");
  if (target_fps > native_fps + 1e-9) throw PreconditionError("target_fps exceeds native fps");
  std::vector<std::uint64_t> out;
  if (frame_count == 0) return out;
  const std::uint64_t last = frame_count - 1;
  const auto first_in = static_cast<std::uint64_t>(std::max(0.0, std::ceil(start_s * native_fps - 1e-9)));
  for (std::uint64_t k = 0;; ++k) {
    const double t = start_s + static_cast<double>(k) / target_fps;
    if (t >= end_s - 1e-12) break;
    std::uint64_t idx = std::max(nearest_frame_index(t, native_fps), first_in);
    if (idx > last) break;
    if (static_cast<double>(idx) / native_fps >= end_s - 1e-12) break;
    if (!out.empty() && idx <= out.back()) continue;
    out.push_back(idx);
  }
  return out;
}

// Stream of frames from `source` at `target_fps` over the whole source.
class FpsSampler {
 public:
  FpsSampler(FrameSource& source, double target_fps)
      : FpsSampler(source, target_fps, 0.0, source.duration_s()) {}

  FpsSampler(FrameSource& source, double target_fps, double start_s, double end_s)
      : source_(source),
        indices_(sample_indices(source.fps(), source.frame_count(), target_fps, start_s, end_s)) {}

  std::optional<Frame> next() {
    if (cursor_ >= indices_.size()) return std::nullopt;
    const std::uint64_t want = indices_[cursor_++];
    if (!have_pos_ || want != pos_) {
      source_.seek(static_cast<double>(want) / source_.fps());
      pos_ = want;
      have_pos_ = true;
    }
    while (true) {
      auto f = source_.next();
      if (!f) return std::nullopt;
      pos_ = f->index + 1;
      if (f->index == want) return f;
    }
  }

  const std::vector<std::uint64_t>& indices() const noexcept { return indices_; }

 private:
  FrameSource& source_;
  std::vector<std::uint64_t> indices_;
  std::size_t cursor_ = 0;
  std::uint64_t pos_ = 0;
  bool have_pos_ = false;
};

inline FpsSampler sample_at_fps(FrameSource& source, double target_fps) {
  return FpsSampler(source, target_fps);
}

template <typename Stream>
std::vector<Frame> collect(Stream&& s) {
  std::vector<Frame> out;
  while (auto f = s.next()) out.push_back(std::move(*f));
  return out;
}

// Reads a single frame by index.
inline Frame read_frame(FrameSource& source, std::uint64_t index) {
  source.seek(static_cast<double>(index) / source.fps());
  auto f = source.next();
  if (!f) throw PreconditionError("frame index out of range: " + std::to_string(index));
  return std::move(*f);
}

}  // namespace vidcurate
