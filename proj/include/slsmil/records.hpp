#pragma once

// Tab-separated record files. Reals are printed with %.17g so every value
// parses back to the identical double.
//   proposals:  image_id channel x11 y11 x12 y12 x21 y21 x22 y22 sym cx cy side theta
//   detections: image_id cx cy side theta score

#include <cmath>
#include <cstdio>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "slsmil/config.hpp"
#include "slsmil/error.hpp"
#include "slsmil/geom.hpp"
#include "slsmil/postproc.hpp"
#include "slsmil/sls.hpp"

namespace slsmil {

struct ProposalRecord {
  std::string image_id;
  SlsProposal proposal;
};

namespace detail {

inline void append_real(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "\t%.17g", v);
  out += buf;
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> f;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, '\t')) f.push_back(cur);
  return f;
}

inline double field_real(const std::string& s, int lineno) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
    throw Error(ErrorCode::ParseError, "bad number '" + s + "' at line " + std::to_string(lineno));
  return v;
}

}  // namespace detail

inline std::string format_proposal(const std::string& image_id, const SlsProposal& p) {
  std::string out = image_id + "\t" + std::to_string(p.channel);
  for (double v : {p.seg1.a.x, p.seg1.a.y, p.seg1.b.x, p.seg1.b.y, p.seg2.a.x, p.seg2.a.y, p.seg2.b.x, p.seg2.b.y,
                   p.sym, p.square.center.x, p.square.center.y, p.square.side, p.square.theta})
    detail::append_real(out, v);
  return out + "\n";
}

inline std::vector<ProposalRecord> parse_proposals(std::istream& in) {
  std::vector<ProposalRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::split_tabs(line);
    if (f.size() != 15)
      throw Error(ErrorCode::ParseError, "proposal record needs 15 fields at line " + std::to_string(lineno));
    double v[13];
    for (int i = 0; i < 13; ++i) v[i] = detail::field_real(f[i + 2], lineno);
    int channel = 0;
    if (!detail::parse_integer(f[1], channel) || channel < 0)
      throw Error(ErrorCode::ParseError, "bad channel at line " + std::to_string(lineno));
    ProposalRecord r;
    r.image_id = f[0];
    r.proposal.channel = channel;
    r.proposal.seg1 = {{v[0], v[1]}, {v[2], v[3]}, channel};
    r.proposal.seg2 = {{v[4], v[5]}, {v[6], v[7]}, channel};
    r.proposal.sym = v[8];
    r.proposal.square = OrientedSquare({v[9], v[10]}, v[11], v[12]);
    out.push_back(std::move(r));
  }
  return out;
}

inline std::string format_detection(const Detection& d) {
  std::string out = d.image_id;
  for (double v : {d.square.center.x, d.square.center.y, d.square.side, d.square.theta, d.score})
    detail::append_real(out, v);
  return out + "\n";
}

inline std::vector<Detection> parse_detections(std::istream& in) {
  std::vector<Detection> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::split_tabs(line);
    if (f.size() != 6)
      throw Error(ErrorCode::ParseError, "detection record needs 6 fields at line " + std::to_string(lineno));
    double v[5];
    for (int i = 0; i < 5; ++i) v[i] = detail::field_real(f[i + 1], lineno);
    Detection d;
    d.image_id = f[0];
    d.square = OrientedSquare({v[0], v[1]}, v[2], v[3]);
    d.score = v[4];
    d.direction = d.square.theta;
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace slsmil
