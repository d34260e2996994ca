#pragma once

// Ground-truth files in the NWPU VHR-10 convention: one text file per image,
// one object per line as `(x1,y1),(x2,y2),c` with integer box corners and an
// integer class id. Only class 1 (airplane) is kept.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "slsmil/error.hpp"
#include "slsmil/geom.hpp"

namespace slsmil {

inline constexpr int kAirplaneClass = 1;

struct GroundTruth {
  std::string image_id;
  std::vector<Aabb> boxes;
};

inline bool parse_annotation_line(const std::string& line, Aabb& box, int& cls) {
  long x1 = 0, y1 = 0, x2 = 0, y2 = 0, c = 0;
  char tail = 0;
  const int n = std::sscanf(line.c_str(), " (%ld , %ld ) , (%ld , %ld ) , %ld %c", &x1, &y1, &x2,
                            &y2, &c, &tail);
  if (n != 5) return false;
  cls = static_cast<int>(c);
  if (x1 > x2) std::swap(x1, x2);
  if (y1 > y2) std::swap(y1, y2);
  if (x1 == x2 || y1 == y2) return false;
  box = Aabb(static_cast<double>(x1), static_cast<double>(y1), static_cast<double>(x2),
             static_cast<double>(y2));
  return true;
}

inline GroundTruth parse_annotations(std::istream& in, const std::string& image_id) {
  GroundTruth gt{image_id, {}};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    Aabb box;
    int cls = 0;
    if (!parse_annotation_line(line, box, cls))
      throw Error(ErrorCode::ParseError,
                  image_id + ": malformed annotation at line " + std::to_string(lineno));
    if (cls == kAirplaneClass) gt.boxes.push_back(box);
  }
  return gt;
}

inline GroundTruth read_annotations(const std::filesystem::path& path, const std::string& image_id) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  return parse_annotations(in, image_id);
}

/// Boxes are written with integer corners; non-integer boxes are rounded outward.
inline std::string format_annotations(const GroundTruth& gt) {
  std::ostringstream out;
  for (const Aabb& b : gt.boxes) {
    out << '(' << static_cast<long>(std::floor(b.x_min)) << ',' << static_cast<long>(std::floor(b.y_min))
        << "),(" << static_cast<long>(std::ceil(b.x_max)) << ',' << static_cast<long>(std::ceil(b.y_max))
        << ")," << kAirplaneClass << '\n';
  }
  return out.str();
}

}  // namespace slsmil
