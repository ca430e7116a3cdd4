// Wire types for the labeling API. Shapes mirror docs/schemas/*.schema.json
// in the parent package; keep the two in sync when either changes.
export {};
