#include "nlspec/interval_union.hpp"

#include "nlspec/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nlspec {

IntervalUnion::IntervalUnion(std::vector<Interval> intervals) {
  for (const auto &iv : intervals) {
    if (!(iv.lo <= iv.hi) || !std::isfinite(iv.lo) || !std::isfinite(iv.hi))
      throw UsageError("interval bounds must be finite with lo <= hi");
  }
  std::sort(intervals.begin(), intervals.end(),
            [](const Interval &a, const Interval &b) { return a.lo < b.lo; });
  for (const auto &iv : intervals) {
    if (!intervals_.empty() && iv.lo <= intervals_.back().hi)
      intervals_.back().hi = std::max(intervals_.back().hi, iv.hi);
    else
      intervals_.push_back(iv);
  }
}

bool IntervalUnion::contains(double x) const {
  return std::any_of(intervals_.begin(), intervals_.end(),
                     [x](const Interval &iv) { return iv.lo <= x && x <= iv.hi; });
}

double IntervalUnion::distance(double x) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto &iv : intervals_) {
    if (x < iv.lo)
      best = std::min(best, iv.lo - x);
    else if (x > iv.hi)
      best = std::min(best, x - iv.hi);
    else
      return 0.0;
  }
  return best;
}

bool IntervalUnion::within(double lo, double hi) const {
  return empty() || (lo <= min() && max() <= hi);
}

IntervalUnion IntervalUnion::unite(const IntervalUnion &other) const {
  std::vector<Interval> all = intervals_;
  all.insert(all.end(), other.intervals_.begin(), other.intervals_.end());
  return IntervalUnion(std::move(all));
}

} // namespace nlspec
