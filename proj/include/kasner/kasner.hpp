#ifndef KASNER_KASNER_HPP
#define KASNER_KASNER_HPP

#include "kasner/background.hpp"
#include "kasner/bounds.hpp"
#include "kasner/einstein.hpp"
#include "kasner/einstein_scatter.hpp"
#include "kasner/errors.hpp"
#include "kasner/fields.hpp"
#include "kasner/ode.hpp"
#include "kasner/parallel.hpp"
#include "kasner/wave.hpp"

#endif
