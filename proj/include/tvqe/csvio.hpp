#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "tvqe/bdrate.hpp"
#include "tvqe/metrics.hpp"

namespace tvqe {

struct QualityRow {
  std::string sequence;
  int q = 0;
  double dpsnr = 0;
  double dssim = 0;
};

struct BdRateRow {
  std::string sequence;
  double bd_percent = 0;
};

struct RDCurve {
  std::string label;
  std::vector<RDPoint> points;
};

// CSV reports, header row first. Sequence names are quoted only when they
// contain a comma, quote, or newline.
void write_quality_csv(std::ostream& os, const std::vector<QualityRow>& rows);
void write_bdrate_csv(std::ostream& os, const std::vector<BdRateRow>& rows);

// Whitespace tables for gnuplot. Curves are separated by two blank lines so
// they are addressable with `index`; infinite PSNR frames print as nan,
// which gnuplot skips.
void write_rd_table(std::ostream& os, const std::vector<RDCurve>& curves);
void write_fluctuation_table(std::ostream& os, const QualitySeries& series);

}  // namespace tvqe
