/*
 * Copyright 2026 The coalition-cdn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef COALITION_CDN_SNAPSHOT_HPP
#define COALITION_CDN_SNAPSHOT_HPP

#include <coalition_cdn/engine.hpp>

#include <filesystem>
#include <span>
#include <string>

// Text formats for collections and transfer logs.
//
// Collection snapshot (JSON):
//   {"servers": [{"id": "s1", "bandwidth_kbps": 7000,
//                 "members": [{"id": "c1", "lambda_kbps": 1360}]}]}
//
// Transfer log: one line per event, no header,
//   seq,player,from,to,payoff_src_before,payoff_dst_after
namespace coalition_cdn::game {

std::string to_snapshot(Collection const& col);
Collection parse_snapshot(std::string const& text);

Collection read_snapshot_file(std::filesystem::path const& path);
void write_snapshot_file(std::filesystem::path const& path, Collection const& col);

std::string format_event(TransferEvent const& ev);
std::string format_events(std::span<TransferEvent const> events);

} // namespace coalition_cdn::game

#endif // COALITION_CDN_SNAPSHOT_HPP
