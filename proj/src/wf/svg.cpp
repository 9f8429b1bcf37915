#include "abi/wf/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace abi::wf {

namespace {

constexpr double margin_left = 52, margin_right = 14, margin_top = 28, margin_bottom = 40;

std::string fmt(double v) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.2f", v);
    return buffer;
}

std::string fmt_tick(double v) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.3g", v);
    return buffer;
}

struct Range {
    double lo = 0.0, hi = 1.0;
    bool seen = false;

    void include(double v) {
        if (!std::isfinite(v)) return;
        if (!seen) {
            lo = hi = v;
            seen = true;
        } else {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    void pad() {
        if (!seen) {
            lo = 0.0;
            hi = 1.0;
        }
        if (hi - lo < 1e-12) {
            lo -= 1.0;
            hi += 1.0;
        }
        const double extra = 0.05 * (hi - lo);
        lo -= extra;
        hi += extra;
    }
};

}  // namespace

std::string svg_escape(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out += c;
        }
    }
    return out;
}

Figure::Figure(int columns, int panel_width, int panel_height)
    : columns_(columns), panel_width_(panel_width), panel_height_(panel_height) {
    if (columns_ < 1) throw std::invalid_argument("figure: needs at least one column");
}

std::size_t Figure::add_panel(std::string title, std::string x_label, std::string y_label) {
    panels_.push_back({std::move(title), std::move(x_label), std::move(y_label), {}});
    return panels_.size() - 1;
}

void Figure::line(std::size_t panel, std::vector<double> xs, std::vector<double> ys, const std::string& color,
                  double width, bool dashed) {
    Element e{Element::Kind::line, std::move(xs), std::move(ys), {}, color, "", width, 2.5, 0.25, dashed};
    panels_.at(panel).elements.push_back(std::move(e));
}

void Figure::scatter(std::size_t panel, std::vector<double> xs, std::vector<double> ys, const std::string& color,
                     double radius) {
    Element e{Element::Kind::scatter, std::move(xs), std::move(ys), {}, color, "", 1.5, radius, 0.25, false};
    panels_.at(panel).elements.push_back(std::move(e));
}

void Figure::band(std::size_t panel, std::vector<double> xs, std::vector<double> lower, std::vector<double> upper,
                  const std::string& color, double opacity) {
    Element e{Element::Kind::band, std::move(xs), std::move(lower), std::move(upper), color, "", 1.5, 2.5, opacity,
              false};
    panels_.at(panel).elements.push_back(std::move(e));
}

void Figure::segments(std::size_t panel, std::vector<double> xs, std::vector<double> lower,
                      std::vector<double> upper, const std::string& color, double width) {
    Element e{Element::Kind::segments, std::move(xs), std::move(lower), std::move(upper), color, "", width, 2.5,
              0.25, false};
    panels_.at(panel).elements.push_back(std::move(e));
}

void Figure::diagonal(std::size_t panel, const std::string& color) {
    Element e{Element::Kind::diagonal, {}, {}, {}, color, "", 1.0, 2.5, 0.25, true};
    panels_.at(panel).elements.push_back(std::move(e));
}

void Figure::note(std::size_t panel, std::string text) {
    Element e{Element::Kind::note, {}, {}, {}, "#444444", std::move(text), 1.5, 2.5, 0.25, false};
    panels_.at(panel).elements.push_back(std::move(e));
}

void Figure::legend(std::size_t panel, const std::string& label, const std::string& color) {
    Element e{Element::Kind::legend, {}, {}, {}, color, label, 1.5, 2.5, 0.25, false};
    panels_.at(panel).elements.push_back(std::move(e));
}

std::string Figure::render() const {
    const int rows = panels_.empty() ? 1 : (static_cast<int>(panels_.size()) + columns_ - 1) / columns_;
    const int total_w = columns_ * panel_width_;
    const int total_h = rows * panel_height_;

    std::ostringstream out;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << total_w << "\" height=\""
        << total_h << "\" viewBox=\"0 0 " << total_w << " " << total_h << "\">\n";
    out << "<rect x=\"0\" y=\"0\" width=\"" << total_w << "\" height=\"" << total_h << "\" fill=\"#ffffff\"/>\n";

    for (std::size_t p = 0; p < panels_.size(); ++p) {
        const Panel& panel = panels_[p];
        const double px = static_cast<double>(static_cast<int>(p) % columns_) * panel_width_;
        const double py = static_cast<double>(static_cast<int>(p) / columns_) * panel_height_;
        const double x0 = px + margin_left, y0 = py + margin_top;
        const double w = panel_width_ - margin_left - margin_right;
        const double h = panel_height_ - margin_top - margin_bottom;

        Range rx, ry;
        bool has_diagonal = false;
        for (const Element& e : panel.elements) {
            if (e.kind == Element::Kind::diagonal) has_diagonal = true;
            for (double v : e.xs) rx.include(v);
            for (double v : e.ys) ry.include(v);
            for (double v : e.ys2) ry.include(v);
        }
        if (has_diagonal) {
            // square range so y = x is meaningful
            rx.include(ry.seen ? ry.lo : 0.0);
            rx.include(ry.seen ? ry.hi : 1.0);
            ry.include(rx.lo);
            ry.include(rx.hi);
        }
        rx.pad();
        ry.pad();

        auto X = [&](double v) { return x0 + (v - rx.lo) / (rx.hi - rx.lo) * w; };
        auto Y = [&](double v) { return y0 + h - (v - ry.lo) / (ry.hi - ry.lo) * h; };

        out << "<g>\n";
        out << "<rect x=\"" << fmt(x0) << "\" y=\"" << fmt(y0) << "\" width=\"" << fmt(w) << "\" height=\""
            << fmt(h) << "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
        out << "<text x=\"" << fmt(x0 + w / 2) << "\" y=\"" << fmt(py + 18) << "\" text-anchor=\"middle\" "
            << "font-family=\"sans-serif\" font-size=\"13\">" << svg_escape(panel.title) << "</text>\n";
        out << "<text x=\"" << fmt(x0 + w / 2) << "\" y=\"" << fmt(py + panel_height_ - 8)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << svg_escape(panel.x_label) << "</text>\n";
        out << "<text x=\"" << fmt(px + 14) << "\" y=\"" << fmt(y0 + h / 2)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" transform=\"rotate(-90 "
            << fmt(px + 14) << " " << fmt(y0 + h / 2) << ")\">" << svg_escape(panel.y_label) << "</text>\n";

        for (int t = 0; t < 5; ++t) {
            const double fx = rx.lo + (rx.hi - rx.lo) * t / 4.0;
            const double fy = ry.lo + (ry.hi - ry.lo) * t / 4.0;
            out << "<line x1=\"" << fmt(X(fx)) << "\" y1=\"" << fmt(y0 + h) << "\" x2=\"" << fmt(X(fx))
                << "\" y2=\"" << fmt(y0 + h + 4) << "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
            out << "<text x=\"" << fmt(X(fx)) << "\" y=\"" << fmt(y0 + h + 16)
                << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << fmt_tick(fx)
                << "</text>\n";
            out << "<line x1=\"" << fmt(x0 - 4) << "\" y1=\"" << fmt(Y(fy)) << "\" x2=\"" << fmt(x0)
                << "\" y2=\"" << fmt(Y(fy)) << "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
            out << "<text x=\"" << fmt(x0 - 6) << "\" y=\"" << fmt(Y(fy) + 3)
                << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fmt_tick(fy)
                << "</text>\n";
        }

        int legend_row = 0;
        for (const Element& e : panel.elements) {
            switch (e.kind) {
                case Element::Kind::band: {
                    out << "<polygon points=\"";
                    for (std::size_t i = 0; i < e.xs.size(); ++i)
                        out << fmt(X(e.xs[i])) << "," << fmt(Y(e.ys[i])) << " ";
                    for (std::size_t i = e.xs.size(); i-- > 0;)
                        out << fmt(X(e.xs[i])) << "," << fmt(Y(e.ys2[i])) << " ";
                    out << "\" fill=\"" << e.color << "\" fill-opacity=\"" << fmt(e.opacity)
                        << "\" stroke=\"none\"/>\n";
                    break;
                }
                case Element::Kind::line: {
                    out << "<polyline points=\"";
                    for (std::size_t i = 0; i < e.xs.size(); ++i)
                        out << fmt(X(e.xs[i])) << "," << fmt(Y(e.ys[i])) << " ";
                    out << "\" fill=\"none\" stroke=\"" << e.color << "\" stroke-width=\"" << fmt(e.width) << "\"";
                    if (e.dashed) out << " stroke-dasharray=\"5,4\"";
                    out << "/>\n";
                    break;
                }
                case Element::Kind::scatter:
                    for (std::size_t i = 0; i < e.xs.size(); ++i)
                        out << "<circle cx=\"" << fmt(X(e.xs[i])) << "\" cy=\"" << fmt(Y(e.ys[i])) << "\" r=\""
                            << fmt(e.radius) << "\" fill=\"" << e.color << "\" fill-opacity=\"0.7\"/>\n";
                    break;
                case Element::Kind::segments:
                    for (std::size_t i = 0; i < e.xs.size(); ++i)
                        out << "<line x1=\"" << fmt(X(e.xs[i])) << "\" y1=\"" << fmt(Y(e.ys[i])) << "\" x2=\""
                            << fmt(X(e.xs[i])) << "\" y2=\"" << fmt(Y(e.ys2[i])) << "\" stroke=\"" << e.color
                            << "\" stroke-width=\"" << fmt(e.width) << "\" stroke-opacity=\"0.5\"/>\n";
                    break;
                case Element::Kind::diagonal: {
                    const double lo = std::max(rx.lo, ry.lo), hi = std::min(rx.hi, ry.hi);
                    out << "<line x1=\"" << fmt(X(lo)) << "\" y1=\"" << fmt(Y(lo)) << "\" x2=\"" << fmt(X(hi))
                        << "\" y2=\"" << fmt(Y(hi)) << "\" stroke=\"" << e.color
                        << "\" stroke-width=\"1\" stroke-dasharray=\"5,4\"/>\n";
                    break;
                }
                case Element::Kind::note:
                    out << "<text x=\"" << fmt(x0 + w / 2) << "\" y=\"" << fmt(y0 + h / 2)
                        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" fill=\""
                        << e.color << "\">" << svg_escape(e.text) << "</text>\n";
                    break;
                case Element::Kind::legend:
                    out << "<text x=\"" << fmt(x0 + 8) << "\" y=\"" << fmt(y0 + 14 + 13 * legend_row)
                        << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << e.color << "\">"
                        << svg_escape(e.text) << "</text>\n";
                    ++legend_row;
                    break;
            }
        }
        out << "</g>\n";
    }
    out << "</svg>\n";
    return out.str();
}

void Figure::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("figure: cannot open '" + path + "' for writing");
    out << render();
    if (!out) throw std::runtime_error("figure: short write to '" + path + "'");
}

}  // namespace abi::wf
