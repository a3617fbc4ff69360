export * from "./api.js";
export * from "./lasso.js";
export * from "./mutations.js";
export * from "./palette.js";
export * from "./payload.js";
export * from "./viewstate.js";
