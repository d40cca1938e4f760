#pragma once

#include <cstdint>

// Cluster address map. All constants are byte addresses.
namespace odrg::map {

inline constexpr uint32_t kImemBase = 0x0000'1000;
inline constexpr uint32_t kImemSize = 64 * 1024;

inline constexpr uint32_t kTcdmBase = 0x1000'0000;
inline constexpr uint32_t kTcdmSize = 64 * 1024;
inline constexpr uint32_t kTcdmEnd = kTcdmBase + kTcdmSize;

inline constexpr uint32_t kPeriphBase = 0x1020'0000;
inline constexpr uint32_t kPeriphSize = 0x1000;

inline constexpr uint32_t kOdrgBase = kPeriphBase + 0x000;  // group g at +0x100*g
inline constexpr uint32_t kOdrgStride = 0x100;
inline constexpr uint32_t kEventUnitBase = kPeriphBase + 0x800;
inline constexpr uint32_t kClusterCtrlBase = kPeriphBase + 0xC00;
inline constexpr uint32_t kExitReg = kPeriphBase + 0xFF0;

// ODRG register offsets.
inline constexpr uint32_t kOdrgMode = 0x00;
inline constexpr uint32_t kOdrgResyncDelay = 0x04;
inline constexpr uint32_t kOdrgSpStore = 0x08;
inline constexpr uint32_t kOdrgMismatch0 = 0x0C;
inline constexpr uint32_t kOdrgMismatch1 = 0x10;
inline constexpr uint32_t kOdrgMismatch2 = 0x14;
inline constexpr uint32_t kOdrgStatus = 0x18;
inline constexpr uint32_t kOdrgForceResync = 0x1C;

// Event unit offsets. A load from BARRIER blocks until every participating
// logical core has arrived.
inline constexpr uint32_t kEuBarrier = 0x00;
inline constexpr uint32_t kEuBarrierTarget = 0x04;
inline constexpr uint32_t kEuWake = 0x08;
inline constexpr uint32_t kEuBarrierAddr = kEventUnitBase + kEuBarrier;

// Cluster control offsets.
inline constexpr uint32_t kCcNumHarts = 0x00;
inline constexpr uint32_t kCcGroupId = 0x04;  // ODRG index of the requesting port
inline constexpr uint32_t kCcBootAddr = 0x08;
inline constexpr uint32_t kCcCycleLo = 0x0C;
inline constexpr uint32_t kCcCycleHi = 0x10;

constexpr bool in_imem(uint32_t a) { return a >= kImemBase && a - kImemBase < kImemSize; }
constexpr bool in_tcdm(uint32_t a) { return a >= kTcdmBase && a < kTcdmEnd; }
constexpr bool in_periph(uint32_t a) { return a >= kPeriphBase && a - kPeriphBase < kPeriphSize; }

}  // namespace odrg::map
