#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lidarbg {

enum class ReturnFlag : std::uint8_t { NoReturn = 0, Return = 1 };

/// One LiDAR firing. A Return carries either a range (spherical form) or
/// cartesian coordinates, never both. A NoReturn carries neither, and no
/// intensity.
struct PointRecord {
  std::uint64_t frame_id = 0;
  int beam_id = 0;
  double azimuth_deg = 0.0;
  std::optional<double> range_m;
  std::optional<std::array<double, 3>> xyz;
  std::optional<double> intensity;
  ReturnFlag flag = ReturnFlag::Return;

  bool is_return() const noexcept { return flag == ReturnFlag::Return; }

  static PointRecord spherical(std::uint64_t frame, int beam, double azimuth, double range,
                               double intensity);
  static PointRecord cartesian(std::uint64_t frame, int beam, double azimuth,
                               std::array<double, 3> xyz, double intensity);
  static PointRecord no_return(std::uint64_t frame, int beam, double azimuth);

  friend bool operator==(const PointRecord&, const PointRecord&) = default;
};

struct Frame {
  std::uint64_t frame_id = 0;
  double timestamp = 0.0;
  std::vector<PointRecord> points;

  friend bool operator==(const Frame&, const Frame&) = default;
};

enum class FrameFormat { Csv, Binary };

FrameFormat parse_frame_format(std::string_view name);
std::string_view to_string(FrameFormat format);

struct IoOptions {
  double max_intensity = 255.0;
};

/// Checks the record invariants; throws FormatError(row, reason).
void validate_record(const PointRecord& record, std::size_t row, const IoOptions& options = {});

/// Sequential reader that holds at most one frame (plus one look-ahead row)
/// in memory at a time.
class FrameReader {
 public:
  virtual ~FrameReader() = default;
  /// Next frame in ascending frame_id order, or nullopt at end of stream.
  virtual std::optional<Frame> next() = 0;
};

std::unique_ptr<FrameReader> open_frame_reader(const std::filesystem::path& path, FrameFormat format,
                                               const IoOptions& options = {});
std::unique_ptr<FrameReader> make_frame_reader(std::unique_ptr<std::istream> stream, FrameFormat format,
                                               const IoOptions& options = {});

/// Reads a whole file into memory. Convenience for tests and small inputs.
std::vector<Frame> read_frames(const std::filesystem::path& path, FrameFormat format,
                               const IoOptions& options = {});

/// Streaming writer; frames must be appended in ascending frame_id order.
class FrameWriter {
 public:
  FrameWriter(const std::filesystem::path& path, FrameFormat format);
  FrameWriter(std::unique_ptr<std::ostream> stream, FrameFormat format);
  ~FrameWriter();
  FrameWriter(const FrameWriter&) = delete;
  FrameWriter& operator=(const FrameWriter&) = delete;

  void write(const Frame& frame);
  void close();

 private:
  std::unique_ptr<std::ostream> out_;
  FrameFormat format_;
  bool header_written_ = false;
  std::optional<std::uint64_t> last_frame_id_;
};

void write_frames(std::span<const Frame> frames, const std::filesystem::path& path, FrameFormat format);

inline constexpr std::string_view kFrameCsvHeader =
    "frame_id,timestamp,beam_id,azimuth_deg,range_m,x,y,z,intensity,return_flag";
inline constexpr std::array<char, 8> kFrameBinaryMagic = {'L', 'B', 'G', 'P', 'T', 'S', '\0', '\x01'};

}  // namespace lidarbg
