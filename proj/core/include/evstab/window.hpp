#pragma once

#include <optional>
#include <vector>

#include "evstab/camera.hpp"
#include "evstab/quat.hpp"
#include "evstab/types.hpp"

namespace evstab {

/// An area-count slice of stabilized, undistorted events.
struct EventWindow {
  std::vector<Event> events;  // time-ordered; may include out-of-FOV events
  double t_start = 0;
  double t_end = 0;  // timestamp of the last event
  Quat q_ref;        // reference orientation at creation
  int tile_rows = 0;
  int tile_cols = 0;
  bool partial = false;  // stream ended before any tile crossed the threshold
};

/// Closes a window as soon as any image tile has accumulated strictly more
/// than `threshold` events (the triggering event is included); counters then
/// reset. Events outside the sensor are carried along but never counted.
class WindowSlicer {
 public:
  WindowSlicer(int tile_rows, int tile_cols, int threshold, const CameraModel& c);

  /// Push one event; count_x/count_y are the coordinates used for tiling
  /// (stabilized by default; raw under --window-space raw). Returns the
  /// closed window when this event crossed the threshold.
  std::optional<EventWindow> push(const Event& e, double count_x, double count_y,
                                  const Quat& q_ref);

  /// Convenience: tile on the event's own coordinates.
  std::optional<EventWindow> push(const Event& e, const Quat& q_ref) {
    return push(e, e.x, e.y, q_ref);
  }

  /// Emit the trailing partial window, if any.
  std::optional<EventWindow> flush();

  int pending() const { return static_cast<int>(buf_.size()); }

 private:
  int rows_, cols_, threshold_;
  int width_, height_;
  double inv_tile_w_, inv_tile_h_;
  std::vector<int> counts_;
  std::vector<Event> buf_;
  Quat q_ref_first_;
  bool have_first_ = false;

  EventWindow close(bool partial);
};

/// Whole-stream convenience wrapper around WindowSlicer; tiles on the
/// events' own coordinates and flushes the trailing partial window.
std::vector<EventWindow> slice_by_area_count(const std::vector<Event>& events, int tile_rows,
                                             int tile_cols, int threshold, const CameraModel& c,
                                             const Quat& q_ref = Quat::identity());

/// Test baselines, not tuned for the pipeline.
std::vector<EventWindow> slice_fixed_count(const std::vector<Event>& events, int count);
std::vector<EventWindow> slice_fixed_duration(const std::vector<Event>& events, double dt);

}  // namespace evstab
