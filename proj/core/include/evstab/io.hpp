#pragma once

#include <string>
#include <vector>

#include "evstab/camera.hpp"
#include "evstab/image_grid.hpp"
#include "evstab/types.hpp"

namespace evstab {

// Text formats follow the ECD dataset layout so public sequences drop in
// unchanged. Polarity is {0,1} on disk and {-1,+1} in memory. Pose
// quaternions are stored (qx qy qz qw) on disk but held (w,x,y,z) in memory.

/// Lines "t x y p". Timestamps may regress by at most 1 us.
std::vector<Event> read_events(const std::string& path);
/// Sub-pixel coordinates are written with 6 decimals; raw integer inputs
/// round-trip exactly.
void write_events(const std::vector<Event>& events, const std::string& path);

/// Line 1: "fx fy cx cy k1 k2 p1 p2 k3"; line 2: "width height".
CameraModel read_calib(const std::string& path);
void write_calib(const CameraModel& c, const std::string& path);

/// Lines "t px py pz qx qy qz qw".
std::vector<PoseSample> read_poses(const std::string& path);
void write_poses(const std::vector<PoseSample>& poses, const std::string& path);

/// Lines "t ax ay az gx gy gz".
std::vector<ImuSample> read_imu(const std::string& path);
void write_imu(const std::vector<ImuSample>& samples, const std::string& path);

/// P5 (binary) or P2 (ASCII) graymaps, maxval 255 or 65535, scaled to [0,1].
ImageGrid read_pgm(const std::string& path);
/// maxval 255 or 65535; values are clamped to [0,1] before quantization.
void write_pgm(const ImageGrid& grid, const std::string& path, int maxval = 65535);

/// RFC-4180 CSV: header from schema, one record per row.
void write_csv_report(const std::vector<std::vector<std::string>>& rows,
                      const std::vector<std::string>& schema, const std::string& path);
std::vector<std::vector<std::string>> read_csv(const std::string& path);

/// SHA-1 of a byte string / file contents, lowercase hex. Used to pin run
/// inputs in manifests.
std::string sha1_hex(const std::string& bytes);
std::string sha1_file(const std::string& path);

}  // namespace evstab
