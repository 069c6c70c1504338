#pragma once

// Tab-separated rating files (user, item, rating[, timestamp]) mapped onto an
// ObservationSet. User and item ids are remapped to dense indices in first-seen
// order; ratings are shifted so the lowest becomes level 0.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "roundrank/io.hpp"
#include "roundrank/matrix.hpp"

namespace roundrank {

struct RatingDataset {
  ObservationSet obs;
  std::vector<std::string> user_ids;  // dense index -> original id
  std::vector<std::string> item_ids;
};

struct RatingsFormat {
  int min_rating = 1;
  int max_rating = 5;
  char delimiter = '\t';
};

namespace detail {

struct IdMap {
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::string> names;

  std::size_t intern(const std::string& id) {
    auto [it, fresh] = index.try_emplace(id, names.size());
    if (fresh) names.push_back(id);
    return it->second;
  }
};

inline void read_ratings_into(std::istream& is, const std::string& source,
                              const RatingsFormat& fmt, IdMap& users, IdMap& items,
                              std::vector<Observation>& entries, SplitTag tag) {
  LineReader reader{is, source};
  std::string line;
  while (reader.next(line)) {
    std::istringstream fields(line);
    std::string user, item, rating_text;
    if (!std::getline(fields, user, fmt.delimiter) ||
        !std::getline(fields, item, fmt.delimiter) ||
        !std::getline(fields, rating_text, fmt.delimiter))
      reader.fail("expected at least 3 delimited fields");
    int rating = 0;
    try {
      std::size_t used = 0;
      rating = std::stoi(rating_text, &used);
      if (used != rating_text.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      reader.fail("rating '" + rating_text + "' is not an integer");
    }
    if (rating < fmt.min_rating || rating > fmt.max_rating)
      reader.fail("rating " + std::to_string(rating) + " outside [" +
                  std::to_string(fmt.min_rating) + ", " + std::to_string(fmt.max_rating) + "]");
    Observation e;
    e.row = users.intern(user);
    e.col = items.intern(item);
    e.value = static_cast<Level>(rating - fmt.min_rating);
    e.tag = tag;
    entries.push_back(e);
  }
}

}  // namespace detail

// Single-file load; the split tags are all train until split_by_user is run.
inline RatingDataset load_ratings(const std::string& path, const RatingsFormat& fmt = {}) {
  auto is = detail::open_input(path);
  RatingDataset ds;
  detail::IdMap users, items;
  std::vector<Observation> entries;
  detail::read_ratings_into(is, path, fmt, users, items, entries, SplitTag::train);
  ds.obs.n_rows = users.names.size();
  ds.obs.n_cols = items.names.size();
  ds.obs.max_level = fmt.max_rating - fmt.min_rating;
  ds.obs.entries = std::move(entries);
  ds.user_ids = std::move(users.names);
  ds.item_ids = std::move(items.names);
  validate_observations(ds.obs, "load_ratings(" + path + ")");
  return ds;
}

// Pre-split pair (e.g. the u<k>.base / u<k>.test files shipped with the
// ml-100k archive). Both files share one id space; test rows become the
// validation split.
inline RatingDataset load_ratings_pair(const std::string& train_path,
                                       const std::string& test_path,
                                       const RatingsFormat& fmt = {}) {
  RatingDataset ds;
  detail::IdMap users, items;
  std::vector<Observation> entries;
  {
    auto is = detail::open_input(train_path);
    detail::read_ratings_into(is, train_path, fmt, users, items, entries, SplitTag::train);
  }
  {
    auto is = detail::open_input(test_path);
    detail::read_ratings_into(is, test_path, fmt, users, items, entries, SplitTag::validation);
  }
  ds.obs.n_rows = users.names.size();
  ds.obs.n_cols = items.names.size();
  ds.obs.max_level = fmt.max_rating - fmt.min_rating;
  ds.obs.entries = std::move(entries);
  ds.user_ids = std::move(users.names);
  ds.item_ids = std::move(items.names);
  validate_observations(ds.obs, "load_ratings_pair");
  return ds;
}

// Holds out `fraction` of each user's ratings (rounded down) as validation.
// Users with a single rating keep it in train so every row stays anchored.
inline ObservationSet split_by_user(const ObservationSet& obs, double fraction,
                                    std::uint64_t seed) {
  detail::require(fraction >= 0.0 && fraction < 1.0,
                  "split_by_user: fraction must lie in [0, 1)");
  std::vector<std::vector<std::size_t>> by_user(obs.n_rows);
  for (std::size_t i = 0; i < obs.entries.size(); ++i)
    by_user[obs.entries[i].row].push_back(i);

  ObservationSet out = obs;
  for (Observation& e : out.entries) e.tag = SplitTag::train;
  std::mt19937_64 rng(seed);
  for (auto& idxs : by_user) {
    if (idxs.size() < 2) continue;
    const auto n_val = static_cast<std::size_t>(fraction * static_cast<double>(idxs.size()));
    if (n_val == 0) continue;
    std::shuffle(idxs.begin(), idxs.end(), rng);
    for (std::size_t t = 0; t < n_val; ++t)
      out.entries[idxs[t]].tag = SplitTag::validation;
  }
  return out;
}

}  // namespace roundrank
