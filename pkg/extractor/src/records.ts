import { writeFileSync } from "node:fs";

/** One training example in the trainer's record-file schema. */
export interface FeatureRecord {
  id: string;
  label: 0 | 1;
  domain: string;
  x: number[];
  t_sem: number[];
}

/** Serialize with the same key order the trainer's own writer uses. */
export function recordLine(rec: FeatureRecord): string {
  return JSON.stringify({
    domain: rec.domain,
    id: rec.id,
    label: rec.label,
    t_sem: rec.t_sem,
    x: rec.x,
  });
}

export function recordsToJsonl(records: FeatureRecord[]): string {
  return records.map((r) => recordLine(r) + "\n").join("");
}

export function writeRecordsJsonl(path: string, records: FeatureRecord[]): void {
  writeFileSync(path, recordsToJsonl(records), "utf-8");
}
