/**
 * Built-in molecular viewer: orthographic ball rendering on a 2D canvas.
 *
 * Any scriptable viewer can stand in for it, which is why the session only
 * talks to the three-method adapter below. The canvas implementation keeps
 * projection math in free functions so tests can exercise it headlessly.
 */

import { Quat, rotateVector } from "./protocol.js";
import { Atom, Structure } from "./xyz.js";

export interface ViewerAdapter {
  loadStructure(structure: Structure): void;
  setCamera(orientation: Quat, zoomPercent: number, center: [number, number, number]): void;
  runScript(script: string): void;
}

/** CPK-ish element colors, hex strings for canvas fills. */
export const ELEMENT_COLORS: Record<string, string> = {
  H: "#e8e8e8", C: "#555555", N: "#3050f8", O: "#ff0d0d", S: "#ffff30",
  P: "#ff8000", F: "#90e050", Cl: "#1ff01f", Br: "#a62929", I: "#940094",
  Fe: "#e06633", Mg: "#8aff00", Na: "#ab5cf2", K: "#8f40d4", Ca: "#3dff00",
  Zn: "#7d80b0", X: "#b06fb0",
};

export const ELEMENT_RADII: Record<string, number> = {
  H: 0.31, C: 0.76, N: 0.71, O: 0.66, S: 1.05, P: 1.07, F: 0.57, Cl: 1.02,
  Br: 1.2, I: 1.39, Fe: 1.32, Mg: 1.41, Na: 1.66, K: 2.03, Ca: 1.76,
  Zn: 1.22, X: 1.0,
};

export interface ProjectedAtom {
  x: number;
  y: number;
  depth: number;
  r: number;
  color: string;
}

/**
 * Project atoms orthographically: rotate about the structure center, scale
 * by zoom (100 = structure radius fits the viewport), sort back-to-front.
 */
export function projectAtoms(
  atoms: Atom[],
  structureCenter: [number, number, number],
  orientation: Quat,
  zoomPercent: number,
  cameraCenter: [number, number, number],
  width: number,
  height: number,
  structureRadius: number
): ProjectedAtom[] {
  const scale = ((Math.min(width, height) / 2) * (zoomPercent / 100)) / structureRadius;
  const cx = width / 2;
  const cy = height / 2;
  const out: ProjectedAtom[] = [];
  for (const atom of atoms) {
    const local: [number, number, number] = [
      atom.x - structureCenter[0] - cameraCenter[0],
      atom.y - structureCenter[1] - cameraCenter[1],
      atom.z - structureCenter[2] - cameraCenter[2],
    ];
    const [rx, ry, rz] = rotateVector(orientation, local);
    out.push({
      x: cx + rx * scale,
      y: cy - ry * scale,
      depth: rz,
      r: Math.max(2, (ELEMENT_RADII[atom.element] ?? 1.0) * 0.5 * scale),
      color: ELEMENT_COLORS[atom.element] ?? ELEMENT_COLORS.X,
    });
  }
  out.sort((a, b) => a.depth - b.depth);
  return out;
}

export class CanvasViewer implements ViewerAdapter {
  private structure: Structure | null = null;
  private orientation: Quat = [1, 0, 0, 0];
  private zoom = 100;
  private center: [number, number, number] = [0, 0, 0];
  private background = "#10141c";
  private spinning = false;
  private spinHandle: number | null = null;
  readonly scriptLog: string[] = [];

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly onLocalSpin?: (orientation: Quat) => void
  ) {}

  loadStructure(structure: Structure): void {
    this.structure = structure;
    this.render();
  }

  setCamera(orientation: Quat, zoomPercent: number, center: [number, number, number]): void {
    this.orientation = orientation;
    this.zoom = zoomPercent;
    this.center = center;
    this.render();
  }

  get camera(): { orientation: Quat; zoom: number; center: [number, number, number] } {
    return { orientation: this.orientation, zoom: this.zoom, center: this.center };
  }

  /**
   * The built-in viewer understands a small script dialect; anything else
   * is logged verbatim (scripts are opaque to the protocol, each viewer
   * interprets what it can).
   */
  runScript(script: string): void {
    this.scriptLog.push(script);
    for (const part of script.split(";")) {
      const cmd = part.trim().toLowerCase();
      if (cmd === "spin on") this.startSpin();
      else if (cmd === "spin off") this.stopSpin();
      else if (cmd.startsWith("background ")) {
        this.background = cmd.slice("background ".length).trim();
      }
    }
    this.render();
  }

  private startSpin(): void {
    if (this.spinning) return;
    this.spinning = true;
    const step = () => {
      if (!this.spinning) return;
      const dq: Quat = [Math.cos(0.01), 0, Math.sin(0.01), 0];
      const [w2, x2, y2, z2] = dq;
      const [w1, x1, y1, z1] = this.orientation;
      this.orientation = [
        w2 * w1 - x2 * x1 - y2 * y1 - z2 * z1,
        w2 * x1 + x2 * w1 + y2 * z1 - z2 * y1,
        w2 * y1 - x2 * z1 + y2 * w1 + z2 * x1,
        w2 * z1 + x2 * y1 - y2 * x1 + z2 * w1,
      ];
      this.onLocalSpin?.(this.orientation);
      this.render();
      this.spinHandle = requestAnimationFrame(step);
    };
    this.spinHandle = requestAnimationFrame(step);
  }

  private stopSpin(): void {
    this.spinning = false;
    if (this.spinHandle !== null) cancelAnimationFrame(this.spinHandle);
    this.spinHandle = null;
  }

  render(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const { width, height } = this.canvas;
    ctx.fillStyle = this.background;
    ctx.fillRect(0, 0, width, height);
    if (!this.structure) {
      ctx.fillStyle = "#7a8699";
      ctx.font = "14px system-ui, sans-serif";
      ctx.textAlign = "center";
      ctx.fillText("load a local .xyz structure to begin", width / 2, height / 2);
      return;
    }
    const projected = projectAtoms(
      this.structure.atoms,
      this.structure.center,
      this.orientation,
      this.zoom,
      this.center,
      width,
      height,
      this.structure.radius
    );
    for (const p of projected) {
      ctx.beginPath();
      ctx.arc(p.x, p.y, p.r, 0, Math.PI * 2);
      ctx.fillStyle = p.color;
      ctx.fill();
      ctx.strokeStyle = "rgba(0,0,0,0.35)";
      ctx.stroke();
    }
  }
}
