#pragma once

#include <string>
#include <vector>

namespace abi::wf {

// Minimal multi-panel SVG figure: polylines, scatter, filled bands, vertical
// interval segments, a unit diagonal, and short text notes. Elements are
// collected first; axes and pixel coordinates are resolved at render time
// from the joint data range of each panel.
class Figure {
public:
    explicit Figure(int columns, int panel_width = 340, int panel_height = 280);

    // Returns the panel index used by the element calls below.
    std::size_t add_panel(std::string title, std::string x_label, std::string y_label);
    std::size_t panel_count() const { return panels_.size(); }

    void line(std::size_t panel, std::vector<double> xs, std::vector<double> ys, const std::string& color,
              double width = 1.5, bool dashed = false);
    void scatter(std::size_t panel, std::vector<double> xs, std::vector<double> ys, const std::string& color,
                 double radius = 2.5);
    void band(std::size_t panel, std::vector<double> xs, std::vector<double> lower, std::vector<double> upper,
              const std::string& color, double opacity = 0.25);
    void segments(std::size_t panel, std::vector<double> xs, std::vector<double> lower, std::vector<double> upper,
                  const std::string& color, double width = 1.0);
    // y = x reference across the final panel range
    void diagonal(std::size_t panel, const std::string& color = "#888888");
    // centered message for panels that cannot be drawn
    void note(std::size_t panel, std::string text);
    // one legend line per entry, drawn top-left in the entry color
    void legend(std::size_t panel, const std::string& label, const std::string& color);

    std::string render() const;
    void save(const std::string& path) const;

private:
    struct Element {
        enum class Kind { line, scatter, band, segments, diagonal, note, legend } kind;
        std::vector<double> xs, ys, ys2;
        std::string color, text;
        double width = 1.5, radius = 2.5, opacity = 0.25;
        bool dashed = false;
    };
    struct Panel {
        std::string title, x_label, y_label;
        std::vector<Element> elements;
    };

    int columns_, panel_width_, panel_height_;
    std::vector<Panel> panels_;
};

std::string svg_escape(const std::string& text);

}  // namespace abi::wf
