#include "json_locations.hpp"

#include <algorithm>
#include <iterator>
#include <vector>

namespace bridgeforge::cli {

namespace {

using json = nlohmann::json;

// Input iterator over the text that remembers the last character the lexer
// read, so SAX callbacks can ask where the parser currently is.
class TrackingIterator {
 public:
  using iterator_category = std::input_iterator_tag;
  using value_type = char;
  using difference_type = std::ptrdiff_t;
  using pointer = const char*;
  using reference = const char&;

  TrackingIterator(const char* p, const char** cursor) : p_(p), cursor_(cursor) {}
  reference operator*() const {
    *cursor_ = p_;
    return *p_;
  }
  TrackingIterator& operator++() {
    ++p_;
    return *this;
  }
  TrackingIterator operator++(int) {
    auto copy = *this;
    ++p_;
    return copy;
  }
  friend bool operator==(const TrackingIterator& a, const TrackingIterator& b) { return a.p_ == b.p_; }
  friend bool operator!=(const TrackingIterator& a, const TrackingIterator& b) { return a.p_ != b.p_; }

 private:
  const char* p_;
  const char** cursor_;
};

std::string escape_token(const std::string& key) {
  std::string out;
  for (const char c : key) {
    if (c == '~') {
      out += "~0";
    } else if (c == '/') {
      out += "~1";
    } else {
      out += c;
    }
  }
  return out;
}

class LocatingSax {
 public:
  LocatingSax(std::string_view text, const char** cursor, JsonLocations& out)
      : text_(text), cursor_(cursor), out_(out) {}

  bool null() { return value(); }
  bool boolean(bool) { return value(); }
  bool number_integer(json::number_integer_t) { return value(); }
  bool number_unsigned(json::number_unsigned_t) { return value(); }
  bool number_float(json::number_float_t, const json::string_t&) { return value(); }
  bool string(json::string_t&) { return value(); }
  bool binary(json::binary_t&) { return value(); }

  bool start_object(std::size_t) { return open(false); }
  bool start_array(std::size_t) { return open(true); }
  bool end_object() { return close(); }
  bool end_array() { return close(); }

  bool key(json::string_t& k) {
    if (!frames_.empty()) {
      frames_.back().pending = frames_.back().pointer + "/" + escape_token(k);
      out_.record(frames_.back().pending, current_line());
    }
    return true;
  }

  bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception&) { return false; }

 private:
  struct Frame {
    std::string pointer;
    bool array = false;
    std::size_t index = 0;
    std::string pending;
  };

  std::size_t current_line() const {
    const std::size_t offset = *cursor_ == nullptr ? 0 : static_cast<std::size_t>(*cursor_ - text_.data());
    return line_of_offset(text_, offset);
  }

  std::string next_pointer() {
    if (frames_.empty()) return "";
    Frame& top = frames_.back();
    if (!top.array) return top.pending;
    std::string p = top.pointer + "/" + std::to_string(top.index++);
    out_.record(p, current_line());
    return p;
  }

  bool value() {
    (void)next_pointer();
    return true;
  }
  bool open(bool array) {
    std::string p = next_pointer();
    if (frames_.empty()) out_.record("", current_line());
    frames_.push_back({std::move(p), array, 0, {}});
    return true;
  }
  bool close() {
    if (!frames_.empty()) frames_.pop_back();
    return true;
  }

  std::string_view text_;
  const char** cursor_;
  JsonLocations& out_;
  std::vector<Frame> frames_;
};

}  // namespace

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

JsonLocations JsonLocations::scan(std::string_view text) {
  JsonLocations result;
  const char* cursor = nullptr;
  LocatingSax sax(text, &cursor, result);
  TrackingIterator first(text.data(), &cursor);
  TrackingIterator last(text.data() + text.size(), &cursor);
  try {
    (void)json::sax_parse(first, last, &sax);
  } catch (const json::exception&) {
    // malformed input: keep whatever was located before the error
  }
  return result;
}

std::size_t JsonLocations::line(const std::string& pointer) const {
  std::string p = pointer;
  while (true) {
    if (const auto it = lines_.find(p); it != lines_.end()) return it->second;
    if (p.empty()) return 0;
    p.erase(p.rfind('/'));
  }
}

}  // namespace bridgeforge::cli
