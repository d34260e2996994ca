#pragma once

// Symmetric line segment (SLS) proposals: pairs of segments that mirror each
// other across an axis, each turned into an oriented square crop region.
//
// Endpoint naming: seg1 = (p11 -> p12), seg2 = (p21 -> p22). For a mirror pair
// with the brighter-left direction convention, p11/p12 mirror p22/p21.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "slsmil/geom.hpp"

namespace slsmil {

struct PairingParams {
  double endpoint_distance_factor = 2.0;
  double sym_threshold = 0.3;
  double min_pair_span = 10.0;
  double max_pair_span = 400.0;

  void validate() const {
    if (!(endpoint_distance_factor > 0.0) || !(min_pair_span > 0.0) ||
        !(max_pair_span >= min_pair_span))
      throw Error(ErrorCode::InvalidArgument, "pairing distances must be positive");
    if (!(sym_threshold > 0.0 && sym_threshold < 1.0))
      throw Error(ErrorCode::InvalidArgument, "sym_threshold must lie in (0, 1)");
  }
};

struct SlsProposal {
  OrientedSegment seg1;
  OrientedSegment seg2;
  double sym = 0.0;
  OrientedSquare square;
  int channel = 0;
};

/// The symmetry axis runs through (p11 + p22) / 2 and (p12 + p21) / 2.
inline std::pair<Point2, Point2> symmetry_axis(const OrientedSegment& s1,
                                               const OrientedSegment& s2) {
  return {0.5 * (s1.a + s2.b), 0.5 * (s1.b + s2.a)};
}

inline constexpr double kMinAxisSeparation = 1e-6;

/// Relative endpoint displacement after mirroring both segments across their
/// common axis; 0 for a perfect mirror pair.
inline double symmetry_score(const OrientedSegment& s1, const OrientedSegment& s2) {
  const auto [m1, m2] = symmetry_axis(s1, s2);
  if (distance(m1, m2) < kMinAxisSeparation)
    throw Error(ErrorCode::DegenerateAxis, "cross-paired endpoint midpoints coincide");
  const Point2 q22 = reflect_point(s2.b, m1, m2);
  const Point2 q21 = reflect_point(s2.a, m1, m2);
  const double num = distance(s1.a, q22) + distance(s1.b, q21);
  const double den = distance(s1.a, s2.b) + distance(s1.b, s2.a);
  if (den <= 0.0) throw Error(ErrorCode::DegenerateAxis, "coincident cross endpoints");
  return num / den;
}

/// The second algebraic form: mirror the first segment instead of the second.
inline double symmetry_score_mirrored_first(const OrientedSegment& s1, const OrientedSegment& s2) {
  const auto [m1, m2] = symmetry_axis(s1, s2);
  if (distance(m1, m2) < kMinAxisSeparation)
    throw Error(ErrorCode::DegenerateAxis, "cross-paired endpoint midpoints coincide");
  const Point2 q11 = reflect_point(s1.a, m1, m2);
  const Point2 q12 = reflect_point(s1.b, m1, m2);
  const double num = distance(q11, s2.b) + distance(q12, s2.a);
  const double den = distance(s1.a, s2.b) + distance(s1.b, s2.a);
  return num / den;
}

/// Largest of the four cross distances between the two segments' endpoints.
inline double pair_span(const OrientedSegment& s1, const OrientedSegment& s2) {
  return std::max({distance(s1.a, s2.a), distance(s1.a, s2.b), distance(s1.b, s2.a),
                   distance(s1.b, s2.b)});
}

/// Crop square: centre at the endpoint mean, side 1.5x the widest cross
/// distance, angle along the symmetry axis from (p11, p22) towards (p12, p21).
inline OrientedSquare make_square(const OrientedSegment& s1, const OrientedSegment& s2) {
  const Point2 p11 = s1.a, p12 = s1.b, p21 = s2.a, p22 = s2.b;
  const Point2 center{(p11.x + p12.x + p21.x + p22.x) / 4.0, (p11.y + p12.y + p21.y + p22.y) / 4.0};
  const double side = 1.5 * pair_span(s1, s2);
  const double theta = std::atan2(p12.y + p21.y - p11.y - p22.y, p12.x + p21.x - p11.x - p22.x);
  return OrientedSquare(center, side, theta);
}

/// Reject pairs that travel the same way along their symmetry axis: a mirror
/// pair under the direction convention must run in opposite axial directions.
inline bool axially_opposed(const OrientedSegment& s1, const OrientedSegment& s2) {
  const auto [m1, m2] = symmetry_axis(s1, s2);
  const Point2 axis = m2 - m1;
  return dot(s1.direction(), axis) * dot(s2.direction(), axis) <= 0.0;
}

/// Unordered index pairs (i < j) whose endpoints come close enough (relative
/// to the longer segment) and whose span lies in the configured range.
inline std::vector<std::pair<std::size_t, std::size_t>> candidate_pairs(
    const std::vector<OrientedSegment>& segments, const PairingParams& params) {
  params.validate();
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  const std::size_t n = segments.size();
  std::vector<double> len(n);
  for (std::size_t i = 0; i < n; ++i) len[i] = segments[i].length();
  for (std::size_t i = 0; i < n; ++i) {
    const OrientedSegment& s = segments[i];
    for (std::size_t j = i + 1; j < n; ++j) {
      const OrientedSegment& t = segments[j];
      const double limit = params.endpoint_distance_factor * std::max(len[i], len[j]);
      // Quick reject on midpoint distance before the four endpoint checks.
      if (distance(s.midpoint(), t.midpoint()) > limit + 0.5 * (len[i] + len[j])) continue;
      const double closest = std::min({distance(s.a, t.a), distance(s.a, t.b),
                                       distance(s.b, t.a), distance(s.b, t.b)});
      if (closest > limit) continue;
      const double span = pair_span(s, t);
      if (span < params.min_pair_span || span > params.max_pair_span) continue;
      pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

/// Proposals from one channel's segments, in candidate-pair order.
inline std::vector<SlsProposal> generate_channel_proposals(
    const std::vector<OrientedSegment>& segments, const PairingParams& params) {
  std::vector<SlsProposal> out;
  for (const auto& [i, j] : candidate_pairs(segments, params)) {
    const OrientedSegment& s1 = segments[i];
    const OrientedSegment& s2 = segments[j];
    if (!axially_opposed(s1, s2)) continue;
    double sym = 0.0;
    try {
      sym = symmetry_score(s1, s2);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::DegenerateAxis) continue;
      throw;
    }
    if (!(sym < params.sym_threshold)) continue;
    out.push_back({s1, s2, sym, make_square(s1, s2), s1.channel});
  }
  return out;
}

/// All channels' proposals concatenated, ordered by channel then segment
/// indices. `segments_by_channel[c]` holds channel c's segments.
inline std::vector<SlsProposal> generate_proposals(
    const std::vector<std::vector<OrientedSegment>>& segments_by_channel,
    const PairingParams& params) {
  std::vector<SlsProposal> all;
  for (const auto& segs : segments_by_channel) {
    auto p = generate_channel_proposals(segs, params);
    all.insert(all.end(), p.begin(), p.end());
  }
  return all;
}

/// Group a flat, channel-tagged segment list by channel.
inline std::vector<std::vector<OrientedSegment>> split_by_channel(
    const std::vector<OrientedSegment>& segments, int channels) {
  std::vector<std::vector<OrientedSegment>> out(static_cast<std::size_t>(channels));
  for (const auto& s : segments) {
    if (s.channel < 0 || s.channel >= channels)
      throw Error(ErrorCode::InvalidArgument, "segment channel out of range");
    out[static_cast<std::size_t>(s.channel)].push_back(s);
  }
  return out;
}

}  // namespace slsmil
