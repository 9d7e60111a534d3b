#pragma once

#include <vector>

namespace nlspec {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool degenerate() const { return lo == hi; }
  bool operator==(const Interval &) const = default;
};

/// Sorted, pairwise disjoint closed intervals. Points are degenerate
/// intervals. Construction normalizes: overlapping or touching intervals are
/// merged, so consecutive members are always separated by a positive gap.
class IntervalUnion {
public:
  IntervalUnion() = default;
  explicit IntervalUnion(std::vector<Interval> intervals);

  static IntervalUnion point(double x) { return IntervalUnion({{x, x}}); }
  static IntervalUnion closed(double lo, double hi) { return IntervalUnion({{lo, hi}}); }

  const std::vector<Interval> &intervals() const { return intervals_; }
  bool empty() const { return intervals_.empty(); }
  std::size_t size() const { return intervals_.size(); }

  /// Smallest and largest point; undefined on an empty union.
  double min() const { return intervals_.front().lo; }
  double max() const { return intervals_.back().hi; }

  bool contains(double x) const;
  /// Euclidean distance from x to the set; +inf when empty.
  double distance(double x) const;
  bool within(double lo, double hi) const;

  IntervalUnion unite(const IntervalUnion &other) const;

  bool operator==(const IntervalUnion &) const = default;

private:
  std::vector<Interval> intervals_;
};

} // namespace nlspec
