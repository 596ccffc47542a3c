#include "contact_sheet.hpp"

#include <cctype>

#include "errors.hpp"

namespace placer {

namespace {

// 5x7 glyphs, column-wise, LSB = top row. Uppercase letters, digits and the
// punctuation the variant labels use; anything else renders as a box.
struct Glyph {
    char ch;
    uint8_t cols[5];
};

const Glyph kGlyphs[] = {
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00}}, {'-', {0x08, 0x08, 0x08, 0x08, 0x08}},
    {'.', {0x00, 0x60, 0x60, 0x00, 0x00}}, {',', {0x00, 0x50, 0x30, 0x00, 0x00}},
    {'=', {0x14, 0x14, 0x14, 0x14, 0x14}}, {'_', {0x40, 0x40, 0x40, 0x40, 0x40}},
    {':', {0x00, 0x36, 0x36, 0x00, 0x00}}, {'/', {0x20, 0x10, 0x08, 0x04, 0x02}},
    {'+', {0x08, 0x08, 0x3e, 0x08, 0x08}},
    {'0', {0x3e, 0x51, 0x49, 0x45, 0x3e}}, {'1', {0x00, 0x42, 0x7f, 0x40, 0x00}},
    {'2', {0x42, 0x61, 0x51, 0x49, 0x46}}, {'3', {0x21, 0x41, 0x45, 0x4b, 0x31}},
    {'4', {0x18, 0x14, 0x12, 0x7f, 0x10}}, {'5', {0x27, 0x45, 0x45, 0x45, 0x39}},
    {'6', {0x3c, 0x4a, 0x49, 0x49, 0x30}}, {'7', {0x01, 0x71, 0x09, 0x05, 0x03}},
    {'8', {0x36, 0x49, 0x49, 0x49, 0x36}}, {'9', {0x06, 0x49, 0x49, 0x29, 0x1e}},
    {'A', {0x7e, 0x11, 0x11, 0x11, 0x7e}}, {'B', {0x7f, 0x49, 0x49, 0x49, 0x36}},
    {'C', {0x3e, 0x41, 0x41, 0x41, 0x22}}, {'D', {0x7f, 0x41, 0x41, 0x22, 0x1c}},
    {'E', {0x7f, 0x49, 0x49, 0x49, 0x41}}, {'F', {0x7f, 0x09, 0x09, 0x09, 0x01}},
    {'G', {0x3e, 0x41, 0x49, 0x49, 0x3a}}, {'H', {0x7f, 0x08, 0x08, 0x08, 0x7f}},
    {'I', {0x00, 0x41, 0x7f, 0x41, 0x00}}, {'J', {0x20, 0x40, 0x41, 0x3f, 0x01}},
    {'K', {0x7f, 0x08, 0x14, 0x22, 0x41}}, {'L', {0x7f, 0x40, 0x40, 0x40, 0x40}},
    {'M', {0x7f, 0x02, 0x0c, 0x02, 0x7f}}, {'N', {0x7f, 0x04, 0x08, 0x10, 0x7f}},
    {'O', {0x3e, 0x41, 0x41, 0x41, 0x3e}}, {'P', {0x7f, 0x09, 0x09, 0x09, 0x06}},
    {'Q', {0x3e, 0x41, 0x51, 0x21, 0x5e}}, {'R', {0x7f, 0x09, 0x19, 0x29, 0x46}},
    {'S', {0x46, 0x49, 0x49, 0x49, 0x31}}, {'T', {0x01, 0x01, 0x7f, 0x01, 0x01}},
    {'U', {0x3f, 0x40, 0x40, 0x40, 0x3f}}, {'V', {0x1f, 0x20, 0x40, 0x20, 0x1f}},
    {'W', {0x7f, 0x20, 0x18, 0x20, 0x7f}}, {'X', {0x63, 0x14, 0x08, 0x14, 0x63}},
    {'Y', {0x07, 0x08, 0x70, 0x08, 0x07}}, {'Z', {0x61, 0x51, 0x49, 0x45, 0x43}},
};

const uint8_t* glyph_for(char c) {
    static const uint8_t box[5] = {0x7f, 0x41, 0x41, 0x41, 0x7f};
    for (const auto& g : kGlyphs) {
        if (g.ch == c) return g.cols;
    }
    return box;
}

constexpr int kScale = 2;
constexpr int kGlyphW = 6;  // 5 columns + 1 gap
constexpr int kGlyphH = 8;
constexpr int kLabelHeight = kGlyphH * kScale + 4;

}  // namespace

Image render_label(const std::string& text, int width) {
    Image strip = Image::blank(width, kLabelHeight, 3, 0);
    int pen_x = 2;
    for (char raw : text) {
        char c = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
        if (pen_x + kGlyphW * kScale > width) break;
        const uint8_t* cols = glyph_for(c);
        for (int col = 0; col < 5; col++) {
            for (int row = 0; row < 7; row++) {
                if (!(cols[col] >> row & 1)) continue;
                for (int sy = 0; sy < kScale; sy++) {
                    for (int sx = 0; sx < kScale; sx++) {
                        int y = 2 + row * kScale + sy;
                        int x = pen_x + col * kScale + sx;
                        strip.at(y, x, 0) = strip.at(y, x, 1) = strip.at(y, x, 2) = 255;
                    }
                }
            }
        }
        pen_x += kGlyphW * kScale;
    }
    return strip;
}

Image contact_sheet(const std::vector<Image>& panels, const std::vector<std::string>& labels) {
    if (panels.empty() || panels.size() != labels.size()) {
        fail(ErrorKind::InvalidArgument, "contact sheet needs matching panels and labels");
    }
    int pw = panels[0].width, ph = panels[0].height;
    for (const auto& p : panels) {
        if (p.width != pw || p.height != ph) {
            fail(ErrorKind::InvalidArgument, "contact sheet panels must share dimensions");
        }
    }
    const int gap = 4;
    int total_w = static_cast<int>(panels.size()) * pw +
                  (static_cast<int>(panels.size()) - 1) * gap;
    int total_h = ph + kLabelHeight;
    Image sheet = Image::blank(total_w, total_h, 3, 0);
    for (size_t i = 0; i < panels.size(); i++) {
        int ox = static_cast<int>(i) * (pw + gap);
        const Image& p = panels[i];
        for (int y = 0; y < ph; y++) {
            for (int x = 0; x < pw; x++) {
                for (int c = 0; c < 3; c++) {
                    uint8_t v = p.channels == 1 ? p.at(y, x, 0) : p.at(y, x, c);
                    sheet.at(y, ox + x, c) = v;
                }
            }
        }
        Image label = render_label(labels[i], pw);
        for (int y = 0; y < label.height; y++) {
            for (int x = 0; x < pw; x++) {
                for (int c = 0; c < 3; c++) {
                    sheet.at(ph + y, ox + x, c) = label.at(y, x, c);
                }
            }
        }
    }
    return sheet;
}

}  // namespace placer
