/**
 * Minimal XYZ structure reader: atom count, comment line, then one
 * "Element x y z" line per atom (coordinates in angstroms). Enough to feed
 * the built-in viewer; richer formats belong to a richer viewer adapter.
 */

export interface Atom {
  element: string;
  x: number;
  y: number;
  z: number;
}

export interface Structure {
  name: string;
  atoms: Atom[];
  /** geometric center, for the default camera target */
  center: [number, number, number];
  /** max distance from center, for the default zoom */
  radius: number;
}

export function parseXyz(text: string, name = "structure"): Structure {
  const lines = text.split(/\r?\n/);
  if (lines.length < 2) throw new Error("not an XYZ file: too short");
  const count = Number(lines[0].trim());
  if (!Number.isInteger(count) || count <= 0) {
    throw new Error(`not an XYZ file: bad atom count ${lines[0].trim()}`);
  }
  const atoms: Atom[] = [];
  for (let i = 2; i < lines.length && atoms.length < count; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    const parts = line.split(/\s+/);
    if (parts.length < 4) throw new Error(`bad atom line ${i + 1}: ${line}`);
    const [element, xs, ys, zs] = parts;
    const x = Number(xs), y = Number(ys), z = Number(zs);
    if (![x, y, z].every(Number.isFinite)) {
      throw new Error(`bad coordinates on line ${i + 1}: ${line}`);
    }
    atoms.push({ element: normalizeElement(element), x, y, z });
  }
  if (atoms.length !== count) {
    throw new Error(`expected ${count} atoms, found ${atoms.length}`);
  }
  const center: [number, number, number] = [0, 0, 0];
  for (const a of atoms) {
    center[0] += a.x / atoms.length;
    center[1] += a.y / atoms.length;
    center[2] += a.z / atoms.length;
  }
  let radius = 0;
  for (const a of atoms) {
    radius = Math.max(
      radius,
      Math.hypot(a.x - center[0], a.y - center[1], a.z - center[2])
    );
  }
  return { name, atoms, center, radius: Math.max(radius, 1) };
}

function normalizeElement(raw: string): string {
  const el = raw.replace(/[^A-Za-z]/g, "");
  if (!el) return "X";
  return el[0].toUpperCase() + el.slice(1).toLowerCase();
}
