#pragma once

#include "bifrost/bench.hpp"
#include "bifrost/bytes.hpp"
#include "bifrost/crypto.hpp"
#include "bifrost/distance.hpp"
#include "bifrost/errors.hpp"
#include "bifrost/gd_store.hpp"
#include "bifrost/protocol.hpp"
#include "bifrost/sharing.hpp"
#include "bifrost/symbols.hpp"
#include "bifrost/transform.hpp"
