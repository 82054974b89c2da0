#include "salient/report.hpp"

#include <sstream>
#include <vector>

namespace salient {
namespace {

void render_sentence(std::ostringstream& out, const SaliencyReport& report, std::size_t k) {
  std::vector<int> bucket(report.tokens.size(), 0);
  auto top = top_k_salient(report, k);
  for (std::size_t r = 0; r < top.size(); ++r) bucket[top[r].index] = heatmap_bucket(r, k);

  out << "<p class=\"sentence\">";
  for (std::size_t i = 0; i < report.tokens.size(); ++i) {
    if (i) out << ' ';
    if (bucket[i] > 0) {
      out << "<span class=\"sal s" << bucket[i] << "\">" << html_escape(report.tokens[i]) << "</span>";
    } else {
      out << html_escape(report.tokens[i]);
    }
  }
  out << "</p>\n";
}

}  // namespace

int heatmap_bucket(std::size_t rank, std::size_t k) {
  if (k == 0 || rank >= k) return 0;
  return 7 - static_cast<int>(rank * 7 / k);
}

std::string html_escape(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string render_heatmap(const SaliencyReport& report, const PredictionPair& predictions,
                           std::size_t k, const SaliencyReport* baseline) {
  std::ostringstream out;
  out << "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>saliency</title>\n"
      << "<style>\n"
      << "body { font-family: sans-serif; display: flex; gap: 2em; }\n"
      << ".sal { padding: 0 2px; }\n";
  for (int b = 1; b <= 7; ++b) {
    out << ".s" << b << " { background: rgba(220, 0, 0, 0." << b << "); }\n";
  }
  out << "</style>\n</head>\n<body>\n<main>\n";
  if (baseline != nullptr) {
    out << "<h3>Baseline model</h3>\n";
    render_sentence(out, *baseline, k);
    out << "<h3>Saliency-trained model</h3>\n";
  }
  render_sentence(out, report, k);
  out << "</main>\n<aside>\n<h3>Z</h3>\n<ul class=\"rationale\">\n";
  for (std::size_t i = 0; i < report.rationale.size() && i < report.tokens.size(); ++i) {
    if (report.rationale[i]) {
      out << "<li data-index=\"" << i << "\">" << html_escape(report.tokens[i]) << "</li>\n";
    }
  }
  out << "</ul>\n";
  if (predictions.baseline && predictions.saliency) {
    out << "<p class=\"predictions\">P<sub>B</sub> = " << *predictions.baseline
        << ", P<sub>S</sub> = " << *predictions.saliency << "</p>\n";
  } else if (predictions.saliency) {
    out << "<p class=\"predictions\">P = " << *predictions.saliency << "</p>\n";
  }
  out << "</aside>\n</body>\n</html>\n";
  return out.str();
}

}  // namespace salient
