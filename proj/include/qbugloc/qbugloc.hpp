#pragma once

#include "qbugloc/chi_square.hpp"
#include "qbugloc/circuit.hpp"
#include "qbugloc/harness.hpp"
#include "qbugloc/io.hpp"
#include "qbugloc/locator.hpp"
#include "qbugloc/search_tree.hpp"
#include "qbugloc/stat_test.hpp"
