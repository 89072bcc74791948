/**
 * Arcball interaction: mouse drags orbit the camera, the wheel zooms.
 * Bounds mirror the server's pose validation so requests never go out of
 * range: rx wraps into [0, 360), ry clamps to [-89, 89], dz to [1.2, 4].
 */

export interface Pose {
  rx: number;
  ry: number;
  dz: number;
}

export const RY_LIMIT = 89;
export const DZ_MIN = 1.2;
export const DZ_MAX = 4.0;

/** A full-width horizontal drag sweeps 180 degrees of azimuth. */
export const DRAG_SWEEP_DEG = 180;

export function wrapRx(rx: number): number {
  const w = rx % 360;
  return w < 0 ? w + 360 : w;
}

export function clampPose(pose: Pose): Pose {
  return {
    rx: wrapRx(pose.rx),
    ry: Math.min(RY_LIMIT, Math.max(-RY_LIMIT, pose.ry)),
    dz: Math.min(DZ_MAX, Math.max(DZ_MIN, pose.dz)),
  };
}

export function dragToPose(
  pose: Pose,
  dxPixels: number,
  dyPixels: number,
  viewWidth: number,
  viewHeight: number,
): Pose {
  return clampPose({
    rx: pose.rx + (dxPixels / viewWidth) * DRAG_SWEEP_DEG,
    ry: pose.ry + (dyPixels / viewHeight) * DRAG_SWEEP_DEG,
    dz: pose.dz,
  });
}

export function wheelToPose(pose: Pose, deltaY: number): Pose {
  // one wheel notch (~100 units) changes distance by 0.1 diagonals
  return clampPose({ ...pose, dz: pose.dz + deltaY * 0.001 });
}
