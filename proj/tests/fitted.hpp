#pragma once

// ARD rate constants fitted so that gamma_a = 2.5 and 3.0 give the target
// equilibria below. A stand-in for the reference constants, which belong in
// configs/ard_case_a.cfg.

#include "mcstab/channel.hpp"
#include "mcstab/reaction.hpp"

namespace fitted {

inline mcstab::ArdParams ard(double gamma_a) {
  return {0.035, 0.012, 0.004, gamma_a, 1.6, 0.2, 10.0, 10.0, 10.0, 0.05};
}

inline const mcstab::StateVector kGuessLow{7.6, 15.6, 14.5, 14.5};   // gamma_a = 2.5
inline const mcstab::StateVector kGuessHigh{7.1, 17.4, 12.4, 12.4};  // gamma_a = 3.0

// Four robots on 50 um channels, mu = 83 um^2/s, rates per minute.
inline mcstab::ChannelTopology ring() { return mcstab::ChannelTopology::ring(4, 50.0, 83.0); }

}  // namespace fitted
