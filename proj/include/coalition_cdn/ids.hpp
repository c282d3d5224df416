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

#ifndef COALITION_CDN_IDS_HPP
#define COALITION_CDN_IDS_HPP

#include <compare>
#include <ostream>
#include <string>
#include <utility>

namespace coalition_cdn {

/// Opaque, totally ordered identifier. Tag keeps client and server ids apart.
template <typename Tag>
struct Id
{
	std::string value;

	Id() = default;
	explicit Id(std::string v) : value(std::move(v)) {}
	explicit Id(char const* v) : value(v) {}

	friend auto operator<=>(Id const&, Id const&) = default;
	friend bool operator==(Id const&, Id const&) = default;

	friend std::ostream& operator<<(std::ostream& os, Id const& id) { return os << id.value; }
};

struct PlayerTag;
struct ServerTag;

/// A streaming client.
using PlayerId = Id<PlayerTag>;
using ClientId = PlayerId;

/// A streaming server.
using ServerId = Id<ServerTag>;

} // namespace coalition_cdn

#endif // COALITION_CDN_IDS_HPP
