/**
 * Client-side opacity curve for the transfer-function editor preview.
 *
 * Mirrors the server's Gaussian-lobe model exactly: the server stays the
 * source of truth and the parity test holds this copy to within 1e-3.
 */

export interface Lobe {
  center: number; // in [0, 1]
  width: number; // in (0, 1]
  height: number; // in [0, 1]
}

export function opacityAt(lobes: Lobe[], s: number): number {
  let sum = 0;
  for (const { center, width, height } of lobes) {
    const d = s - center;
    sum += height * Math.exp(-(d * d) / width);
  }
  return sum;
}

export function opacityCurve(lobes: Lobe[], samples: number): number[] {
  const out = new Array<number>(samples);
  for (let i = 0; i < samples; i++) {
    out[i] = opacityAt(lobes, i / (samples - 1));
  }
  return out;
}

export function lobesToKappa(lobes: Lobe[]): number[] {
  const kappa: number[] = [];
  for (const { center, width, height } of lobes) {
    kappa.push(center, width, height);
  }
  return kappa;
}

export function kappaToLobes(kappa: number[]): Lobe[] {
  if (kappa.length % 3 !== 0 || kappa.length === 0) {
    throw new Error(`kappa length must be a positive multiple of 3, got ${kappa.length}`);
  }
  const lobes: Lobe[] = [];
  for (let i = 0; i < kappa.length; i += 3) {
    lobes.push({ center: kappa[i], width: kappa[i + 1], height: kappa[i + 2] });
  }
  return lobes;
}

export function clampLobe(lobe: Lobe): Lobe {
  return {
    center: Math.min(1, Math.max(0, lobe.center)),
    width: Math.min(1, Math.max(0.005, lobe.width)),
    height: Math.min(1, Math.max(0, lobe.height)),
  };
}
