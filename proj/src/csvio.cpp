#include "tvqe/csvio.hpp"

#include <cstdio>

namespace tvqe {
namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string psnr_cell(const std::optional<double>& v) {
  return v ? fmt("%.6f", *v) : "nan";
}

}  // namespace

void write_quality_csv(std::ostream& os, const std::vector<QualityRow>& rows) {
  os << "sequence,q,dpsnr,dssim\n";
  for (const auto& r : rows)
    os << csv_field(r.sequence) << ',' << r.q << ',' << fmt("%.6f", r.dpsnr)
       << ',' << fmt("%.6f", r.dssim) << '\n';
}

void write_bdrate_csv(std::ostream& os, const std::vector<BdRateRow>& rows) {
  os << "sequence,bd_rate_percent\n";
  for (const auto& r : rows)
    os << csv_field(r.sequence) << ',' << fmt("%.4f", r.bd_percent) << '\n';
}

void write_rd_table(std::ostream& os, const std::vector<RDCurve>& curves) {
  os << "# rate_kbps psnr_db\n";
  for (size_t c = 0; c < curves.size(); ++c) {
    if (c) os << "\n\n";
    os << "# curve: " << curves[c].label << '\n';
    for (const auto& p : curves[c].points)
      os << fmt("%.6f", p.rate) << ' ' << fmt("%.6f", p.psnr) << '\n';
  }
}

void write_fluctuation_table(std::ostream& os, const QualitySeries& series) {
  os << "# frame compressed_psnr enhanced_psnr\n";
  os << "# std compressed=" << fmt("%.6f", series.compressed_std)
     << " enhanced=" << fmt("%.6f", series.enhanced_std) << '\n';
  for (size_t t = 0; t < series.compressed_psnr.size(); ++t)
    os << t << ' ' << psnr_cell(series.compressed_psnr[t]) << ' '
       << psnr_cell(series.enhanced_psnr[t]) << '\n';
}

}  // namespace tvqe
