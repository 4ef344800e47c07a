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

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace trifuse::csv {

// Quoted fields may hold the delimiter, quotes ("") and newlines. Lines
// starting with '#' outside a quoted field are comments. The first
// non-comment record is the header.
class Table {
 public:
  static Table parse(std::string_view text, std::string source = "<memory>", char delimiter = ',');
  static Table read(const std::filesystem::path& path, char delimiter = ',');

  const std::vector<std::string>& header() const { return header_; }
  std::size_t size() const { return rows_.size(); }
  bool has_column(std::string_view name) const;
  // Throws InputError "<source>: column <name> missing".
  std::size_t column(std::string_view name) const;
  const std::string& source() const { return source_; }

  class Row {
   public:
    // File line the record starts on.
    std::size_t line() const { return line_; }
    const std::string& raw(std::size_t col) const { return (*cells_)[col]; }
    const std::string& raw(std::string_view name) const;
    std::optional<std::string> optional_raw(std::string_view name) const;

    std::string text(std::string_view name) const;
    // Non-empty field.
    std::string required(std::string_view name) const;
    double real(std::string_view name) const;
    std::optional<double> optional_real(std::string_view name) const;
    long long integer(std::string_view name) const;
    std::optional<long long> optional_integer(std::string_view name) const;

    // InputError naming the source, line and column.
    [[noreturn]] void fail(std::string_view name, std::string_view what) const;

   private:
    friend class Table;
    const Table* table_ = nullptr;
    const std::vector<std::string>* cells_ = nullptr;
    std::size_t line_ = 0;
  };

  Row row(std::size_t i) const;

 private:
  std::string source_;
  std::vector<std::string> header_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<std::size_t> lines_;
};

class Writer {
 public:
  explicit Writer(char delimiter = ',') : delimiter_(delimiter) {}

  Writer& comment(std::string_view line);
  Writer& record(const std::vector<std::string>& fields);
  const std::string& str() const { return out_; }

 private:
  char delimiter_;
  std::string out_;
};

std::string quote(std::string_view field, char delimiter = ',');

// Shortest representation that parses back to the same double.
std::string format_real(double v);
std::string format_optional(const std::optional<double>& v);

}  // namespace trifuse::csv
