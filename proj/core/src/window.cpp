#include "evstab/window.hpp"

#include <algorithm>
#include <cmath>

#include "evstab/errors.hpp"

namespace evstab {

WindowSlicer::WindowSlicer(int tile_rows, int tile_cols, int threshold, const CameraModel& c)
    : rows_(tile_rows),
      cols_(tile_cols),
      threshold_(threshold),
      width_(c.width),
      height_(c.height),
      counts_(static_cast<std::size_t>(tile_rows) * tile_cols, 0) {
  if (tile_rows < 1 || tile_cols < 1) throw InvalidConfig("tile grid must be >= 1x1");
  if (threshold < 1) throw InvalidConfig("area threshold must be >= 1");
  inv_tile_w_ = tile_cols / static_cast<double>(c.width);
  inv_tile_h_ = tile_rows / static_cast<double>(c.height);
}

EventWindow WindowSlicer::close(bool partial) {
  EventWindow w;
  w.events = std::move(buf_);
  buf_.clear();
  w.t_start = w.events.front().t;
  w.t_end = w.events.back().t;
  w.q_ref = q_ref_first_;
  w.tile_rows = rows_;
  w.tile_cols = cols_;
  w.partial = partial;
  std::fill(counts_.begin(), counts_.end(), 0);
  have_first_ = false;
  return w;
}

std::optional<EventWindow> WindowSlicer::push(const Event& e, double count_x, double count_y,
                                              const Quat& q_ref) {
  if (!have_first_) {
    q_ref_first_ = q_ref;
    have_first_ = true;
  }
  buf_.push_back(e);

  if (count_x >= 0.0 && count_x <= width_ - 1.0 && count_y >= 0.0 && count_y <= height_ - 1.0) {
    int tx = static_cast<int>(count_x * inv_tile_w_);
    int ty = static_cast<int>(count_y * inv_tile_h_);
    if (tx >= cols_) tx = cols_ - 1;
    if (ty >= rows_) ty = rows_ - 1;
    int& n = counts_[static_cast<std::size_t>(ty) * cols_ + tx];
    if (++n > threshold_) return close(false);
  }
  return std::nullopt;
}

std::optional<EventWindow> WindowSlicer::flush() {
  if (buf_.empty()) return std::nullopt;
  return close(true);
}

std::vector<EventWindow> slice_by_area_count(const std::vector<Event>& events, int tile_rows,
                                             int tile_cols, int threshold, const CameraModel& c,
                                             const Quat& q_ref) {
  WindowSlicer slicer(tile_rows, tile_cols, threshold, c);
  std::vector<EventWindow> out;
  for (const Event& e : events)
    if (auto w = slicer.push(e, q_ref)) out.push_back(std::move(*w));
  if (auto w = slicer.flush()) out.push_back(std::move(*w));
  return out;
}

std::vector<EventWindow> slice_fixed_count(const std::vector<Event>& events, int count) {
  if (count < 1) throw InvalidConfig("fixed count must be >= 1");
  std::vector<EventWindow> out;
  for (std::size_t i = 0; i < events.size(); i += count) {
    EventWindow w;
    const std::size_t end = std::min(events.size(), i + count);
    w.events.assign(events.begin() + i, events.begin() + end);
    w.t_start = w.events.front().t;
    w.t_end = w.events.back().t;
    w.partial = end - i < static_cast<std::size_t>(count);
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<EventWindow> slice_fixed_duration(const std::vector<Event>& events, double dt) {
  if (!(dt > 0)) throw InvalidConfig("fixed duration must be positive");
  std::vector<EventWindow> out;
  std::size_t i = 0;
  while (i < events.size()) {
    const double limit = events[i].t + dt;
    EventWindow w;
    while (i < events.size() && events[i].t < limit) w.events.push_back(events[i++]);
    w.t_start = w.events.front().t;
    w.t_end = w.events.back().t;
    w.partial = i == events.size();
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace evstab
