#pragma once

// Umbrella header for the pilotforge toolkit: learned OFDM pilot placement
// via a Concrete-selector autoencoder plus a decoder / super-resolution /
// blind-denoising channel estimation cascade, with classical baselines.

#include "pilotforge/adam.hpp"
#include "pilotforge/channel.hpp"
#include "pilotforge/channelnet.hpp"
#include "pilotforge/checkpoint.hpp"
#include "pilotforge/commands.hpp"
#include "pilotforge/common.hpp"
#include "pilotforge/concrete.hpp"
#include "pilotforge/config.hpp"
#include "pilotforge/dataset.hpp"
#include "pilotforge/estimators.hpp"
#include "pilotforge/grid.hpp"
#include "pilotforge/layers.hpp"
#include "pilotforge/report.hpp"
#include "pilotforge/selector.hpp"
#include "pilotforge/tensor.hpp"
