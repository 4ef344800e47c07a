// Copyright 2026 The trifuse Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "trifuse/csv.hpp"

#include <charconv>
#include <cmath>

#include <fmt/format.h>

#include "trifuse/atomic_file.hpp"
#include "trifuse/errors.hpp"
#include "trifuse/text.hpp"

namespace trifuse::csv {

Table Table::parse(std::string_view text, std::string source, char delimiter) {
  Table t;
  t.source_ = std::move(source);
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

  std::vector<std::vector<std::string>> records;
  std::vector<std::size_t> lines;
  std::size_t line = 1;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    if (text[i] == '#') {
      while (i < n && text[i] != '\n') ++i;
      ++i;
      ++line;
      continue;
    }
    std::vector<std::string> fields;
    std::string field;
    const std::size_t start_line = line;
    bool in_quotes = false;
    bool was_quoted = false;
    bool done = false;
    while (i < n && !done) {
      const char c = text[i];
      if (in_quotes) {
        if (c == '"') {
          if (i + 1 < n && text[i + 1] == '"') {
            field.push_back('"');
            i += 2;
            continue;
          }
          in_quotes = false;
          ++i;
          continue;
        }
        if (c == '\n') ++line;
        field.push_back(c);
        ++i;
        continue;
      }
      if (c == '"' && field.empty() && !was_quoted) {
        in_quotes = true;
        was_quoted = true;
        ++i;
      } else if (c == delimiter) {
        fields.push_back(std::move(field));
        field.clear();
        was_quoted = false;
        ++i;
      } else if (c == '\r' && i + 1 < n && text[i + 1] == '\n') {
        ++i;
      } else if (c == '\n') {
        done = true;
        ++i;
        ++line;
      } else {
        if (was_quoted) {
          throw InputError(fmt::format("{}: line {}: text after closing quote", t.source_, start_line));
        }
        field.push_back(c);
        ++i;
      }
    }
    if (in_quotes) throw InputError(fmt::format("{}: line {}: unterminated quoted field", t.source_, start_line));
    fields.push_back(std::move(field));
    if (fields.size() == 1 && fields[0].empty() && !was_quoted) continue;
    records.push_back(std::move(fields));
    lines.push_back(start_line);
  }

  if (records.empty()) throw InputError(fmt::format("{}: missing header row", t.source_));
  t.header_ = std::move(records.front());
  for (std::size_t c = 0; c < t.header_.size(); ++c) {
    auto name = std::string(text::trim(t.header_[c]));
    if (name.empty()) throw InputError(fmt::format("{}: header column {} is empty", t.source_, c + 1));
    if (!t.index_.emplace(name, c).second) {
      throw InputError(fmt::format("{}: duplicate column {}", t.source_, name));
    }
    t.header_[c] = std::move(name);
  }
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.header_.size()) {
      throw InputError(fmt::format("{}: line {}: expected {} fields, found {}", t.source_, lines[r],
                                   t.header_.size(), records[r].size()));
    }
    t.rows_.push_back(std::move(records[r]));
    t.lines_.push_back(lines[r]);
  }
  return t;
}

Table Table::read(const std::filesystem::path& path, char delimiter) {
  return parse(read_file(path), path.string(), delimiter);
}

bool Table::has_column(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t Table::column(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw InputError(fmt::format("{}: column {} missing", source_, name));
  return it->second;
}

Table::Row Table::row(std::size_t i) const {
  Row r;
  r.table_ = this;
  r.cells_ = &rows_.at(i);
  r.line_ = lines_.at(i);
  return r;
}

void Table::Row::fail(std::string_view name, std::string_view what) const {
  throw InputError(fmt::format("{}: line {}, column {}: {}", table_->source_, line_, name, what));
}

const std::string& Table::Row::raw(std::string_view name) const { return (*cells_)[table_->column(name)]; }

std::optional<std::string> Table::Row::optional_raw(std::string_view name) const {
  if (!table_->has_column(name)) return std::nullopt;
  return raw(name);
}

std::string Table::Row::text(std::string_view name) const { return std::string(text::trim(raw(name))); }

std::string Table::Row::required(std::string_view name) const {
  auto v = text(name);
  if (v.empty()) fail(name, "value is empty");
  return v;
}

double Table::Row::real(std::string_view name) const {
  const auto v = optional_real(name);
  if (!v) fail(name, "value is empty");
  return *v;
}

std::optional<double> Table::Row::optional_real(std::string_view name) const {
  const auto s = text(name);
  if (s.empty()) return std::nullopt;
  const auto v = text::parse_double(s);
  if (!v || !std::isfinite(*v)) fail(name, fmt::format("'{}' is not a finite number", s));
  return v;
}

long long Table::Row::integer(std::string_view name) const {
  const auto v = optional_integer(name);
  if (!v) fail(name, "value is empty");
  return *v;
}

std::optional<long long> Table::Row::optional_integer(std::string_view name) const {
  const auto s = text(name);
  if (s.empty()) return std::nullopt;
  const auto v = text::parse_int(s);
  if (!v) fail(name, fmt::format("'{}' is not an integer", s));
  return v;
}

std::string quote(std::string_view field, char delimiter) {
  const bool needs = field.find_first_of(std::string{delimiter, '"', '\n', '\r'}) != std::string_view::npos ||
                     (!field.empty() && field.front() == '#');
  if (!needs) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

Writer& Writer::comment(std::string_view line) {
  out_ += '#';
  out_ += line;
  out_ += '\n';
  return *this;
}

Writer& Writer::record(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ += delimiter_;
    out_ += quote(fields[i], delimiter_);
  }
  // A lone empty field would read back as a blank line.
  if (fields.size() == 1 && fields[0].empty()) out_ += "\"\"";
  out_ += '\n';
  return *this;
}

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_optional(const std::optional<double>& v) { return v ? format_real(*v) : std::string(); }

}  // namespace trifuse::csv
